//! On-disk JSON formats. All rationals travel as `"p/q"` strings so files
//! stay exact and diffable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aifv::{AifvError, Code, CodeTree, SourceSpec};
use crate::chain::{Chain, FamiliesError, State, StateFamilies};
use crate::numerics::{format_rational, parse_rational, Rational};
use crate::solvers::SolveReport;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Parse(e.to_string())
    }
}

impl From<FamiliesError> for IoError {
    fn from(e: FamiliesError) -> Self {
        IoError::Validation(e.to_string())
    }
}

fn rat_field(context: &str, s: &str) -> Result<Rational, IoError> {
    parse_rational(s).map_err(|_| IoError::Parse(format!("{context}: bad rational {s:?}")))
}

// ---------------------------------------------------------------------------
// problem instances

#[derive(Debug, Serialize, Deserialize)]
pub struct StateDto {
    pub label: String,
    pub cost: String,
    pub transitions: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceDto {
    pub m: usize,
    pub families: Vec<Vec<StateDto>>,
}

impl StateDto {
    pub fn from_state(s: &State) -> Self {
        StateDto {
            label: s.label.clone(),
            cost: format_rational(&s.cost),
            transitions: s.transitions.iter().map(format_rational).collect(),
        }
    }

    pub fn to_state(&self) -> Result<State, IoError> {
        let cost = rat_field(&format!("state {:?} cost", self.label), &self.cost)?;
        let transitions = self
            .transitions
            .iter()
            .map(|t| rat_field(&format!("state {:?} transitions", self.label), t))
            .collect::<Result<_, _>>()?;
        Ok(State::new(cost, transitions, self.label.clone()))
    }
}

pub fn instance_to_json(fams: &StateFamilies) -> String {
    let dto = InstanceDto {
        m: fams.m(),
        families: fams
            .families()
            .iter()
            .map(|f| f.iter().map(StateDto::from_state).collect())
            .collect(),
    };
    serde_json::to_string_pretty(&dto).expect("instance serialization cannot fail")
}

pub fn instance_from_json(text: &str) -> Result<StateFamilies, IoError> {
    let dto: InstanceDto = serde_json::from_str(text)?;
    if dto.families.len() != dto.m {
        return Err(IoError::Validation(format!(
            "m = {} but {} families given",
            dto.m,
            dto.families.len()
        )));
    }
    let families = dto
        .families
        .iter()
        .map(|f| f.iter().map(StateDto::to_state).collect::<Result<_, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StateFamilies::new(families)?)
}

// ---------------------------------------------------------------------------
// sources and code files

#[derive(Debug, Serialize, Deserialize)]
pub struct SourceDto {
    pub n: usize,
    pub probabilities: Vec<String>,
    pub b: u32,
}

impl SourceDto {
    pub fn from_source(src: &SourceSpec) -> Self {
        SourceDto {
            n: src.n(),
            probabilities: src.probabilities().iter().map(format_rational).collect(),
            b: src.b(),
        }
    }

    pub fn to_source(&self) -> Result<SourceSpec, IoError> {
        if self.n != self.probabilities.len() {
            return Err(IoError::Validation(format!(
                "n = {} but {} probabilities given",
                self.n,
                self.probabilities.len()
            )));
        }
        let probs = self
            .probabilities
            .iter()
            .map(|p| rat_field("source probabilities", p))
            .collect::<Result<_, _>>()?;
        SourceSpec::new(probs, self.b).map_err(|e| IoError::Validation(e.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CodeFileDto {
    pub m: usize,
    pub source: SourceDto,
    pub trees: Vec<String>,
}

pub fn code_to_json(code: &Code, src: &SourceSpec) -> String {
    let dto = CodeFileDto {
        m: code.m,
        source: SourceDto::from_source(src),
        trees: code
            .trees
            .iter()
            .map(|t| crate::aifv::serialize_tree(&t.root))
            .collect(),
    };
    serde_json::to_string_pretty(&dto).expect("code serialization cannot fail")
}

pub fn code_from_json(text: &str) -> Result<(Code, SourceSpec), IoError> {
    let dto: CodeFileDto = serde_json::from_str(text)?;
    let src = dto.source.to_source()?;
    if dto.trees.len() != dto.m {
        return Err(IoError::Validation(format!(
            "m = {} but {} trees given",
            dto.m,
            dto.trees.len()
        )));
    }
    let trees = dto
        .trees
        .iter()
        .enumerate()
        .map(|(k, s)| {
            Ok(CodeTree {
                k,
                root: crate::aifv::parse_tree(s).map_err(|e| IoError::Parse(e.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let code = Code::new(trees).map_err(|e| IoError::Validation(e.to_string()))?;
    for (k, t) in code.trees.iter().enumerate() {
        let violations = crate::aifv::validate(t, dto.m, src.n());
        if crate::aifv::has_hard_violation(&violations) {
            return Err(IoError::Validation(format!(
                "tree {k}: {}",
                violations
                    .iter()
                    .map(|v| v.message.clone())
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }
    }
    Ok((code, src))
}

/// Parses a probabilities file: either a JSON SourceDto or one rational per
/// line. For the line format, b is inferred from the largest denominator.
pub fn source_from_text(text: &str) -> Result<SourceSpec, IoError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let dto: SourceDto = serde_json::from_str(text)?;
        return dto.to_source();
    }
    let mut probs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        probs.push(rat_field("probabilities file", line)?);
    }
    if probs.is_empty() {
        return Err(IoError::Parse("no probabilities found".into()));
    }
    let b = probs
        .iter()
        .map(|p| {
            let d = p.denom().magnitude();
            if d.count_ones() != 1 {
                Err(IoError::Validation(format!(
                    "probability {} has a non-dyadic denominator",
                    format_rational(p)
                )))
            } else {
                Ok(d.bits() - 1)
            }
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .max()
        .unwrap_or(0) as u32;
    SourceSpec::new(probs, b).map_err(|e| IoError::Validation(e.to_string()))
}

// ---------------------------------------------------------------------------
// solve reports

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceStepDto {
    pub iteration: usize,
    pub x: Vec<String>,
    pub g: Vec<String>,
    pub h: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveReportDto {
    pub solver: String,
    pub cost: String,
    pub chain: Vec<StateDto>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_shift: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ellipsoid_iterations: Option<usize>,
    pub trace: Vec<TraceStepDto>,
}

pub fn report_to_dto(report: &SolveReport) -> SolveReportDto {
    SolveReportDto {
        solver: report.solver.clone(),
        cost: format_rational(&report.cost),
        chain: report.chain.states().iter().map(StateDto::from_state).collect(),
        iterations: report.iterations,
        cost_shift: report.cost_shift.as_ref().map(format_rational),
        ellipsoid_iterations: report.ellipsoid.as_ref().map(|e| e.iterations),
        trace: report
            .trace
            .iter()
            .map(|t| TraceStepDto {
                iteration: t.iteration,
                x: t.x.0.iter().map(format_rational).collect(),
                g: t.g.iter().map(format_rational).collect(),
                h: format_rational(&t.h),
            })
            .collect(),
    }
}

pub fn report_to_json(report: &SolveReport) -> String {
    serde_json::to_string_pretty(&report_to_dto(report)).expect("report serialization")
}

/// Classifies library errors onto the process exit codes used by the CLI.
pub fn exit_code_for_aifv(e: &AifvError) -> i32 {
    match e {
        AifvError::BudgetExceeded { .. } => 4,
        AifvError::Parse { .. } => 2,
        AifvError::BadSource(_) | AifvError::InvalidTree(_) | AifvError::Families(_) => 3,
        AifvError::EmptyRestrictedFamily(_) => 3,
    }
}

pub type ChainDto = Vec<StateDto>;

pub fn chain_to_dto(chain: &Chain) -> ChainDto {
    chain.states().iter().map(StateDto::from_state).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rat, rat_int};

    #[test]
    fn instance_round_trip() {
        let fams = StateFamilies::new(vec![
            vec![State::new(rat_int(1), vec![rat(1, 2), rat(1, 2)], "s0")],
            vec![State::new(rat(3, 2), vec![rat_int(1), rat_int(0)], "s1")],
        ])
        .unwrap();
        let text = instance_to_json(&fams);
        let back = instance_from_json(&text).unwrap();
        assert_eq!(back, fams);
    }

    #[test]
    fn instance_validation_error_names_state() {
        let text = r#"{"m":2,"families":[[{"label":"bad","cost":"1","transitions":["1","1"]}],[{"label":"ok","cost":"1","transitions":["1","0"]}]]}"#;
        let err = instance_from_json(text).unwrap_err();
        assert!(matches!(err, IoError::Validation(_)));
        assert!(err.to_string().contains("bad"));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            instance_from_json("{nope").unwrap_err(),
            IoError::Parse(_)
        ));
        assert!(matches!(
            instance_from_json(r#"{"m":1,"families":[[{"label":"x","cost":"1/z","transitions":["1"]}]]}"#)
                .unwrap_err(),
            IoError::Parse(_)
        ));
    }

    #[test]
    fn source_text_formats() {
        let src = source_from_text("1/2\n1/4\n# comment\n1/4\n").unwrap();
        assert_eq!(src.n(), 3);
        assert_eq!(src.b(), 2);
        let json = r#"{"n":2,"probabilities":["1/2","1/2"],"b":1}"#;
        let src = source_from_text(json).unwrap();
        assert_eq!(src.n(), 2);
        assert!(source_from_text("1/3\n2/3\n").is_err());
        assert!(source_from_text("").is_err());
    }

    #[test]
    fn code_file_round_trip() {
        let src = SourceSpec::new(vec![rat(1, 2), rat(1, 4), rat(1, 4)], 2).unwrap();
        let fams = crate::aifv::families_from_source(&src, 2, 5).unwrap();
        let report = crate::solvers::solve(
            &fams,
            crate::solvers::Method::Iterate,
            &crate::solvers::SolveOptions::default(),
        )
        .unwrap();
        let code = crate::aifv::code_from_chain(&report.chain).unwrap();
        let text = code_to_json(&code, &src);
        let (back, back_src) = code_from_json(&text).unwrap();
        assert_eq!(back, code);
        assert_eq!(back_src, src);
    }
}
