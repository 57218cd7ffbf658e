//! Command line front end: chain solving, AIFV code construction and
//! coding, oracle queries, envelope dumps and instance generation.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use mcpoly::aifv;
use mcpoly::chain::PointX;
use mcpoly::io;
use mcpoly::numerics::{format_rational, parse_rational, rational_to_f64, Rational};
use mcpoly::polytope::{envelope, separate, BoundingBox, Restriction, Verdict};
use mcpoly::solvers::{self, Method, SolveOptions};

// exit codes: 0 ok, 2 parse, 3 validation, 4 budget, 5 internal
const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_BUDGET: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

#[derive(Parser)]
#[command(name = "mcpoly", version, about = "Minimum-cost Markov chains and binary AIFV-m codes")]
struct Cli {
    /// Emit machine-readable JSON errors on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a JSON chain instance.
    Solve(SolveArgs),
    /// AIFV code construction and coding.
    #[command(subcommand)]
    Aifv(AifvCommand),
    /// Query the separation oracle at a point.
    Oracle(OracleArgs),
    /// Dump envelope values over a grid (m = 2 instances only).
    EnvelopeDump(EnvelopeDumpArgs),
    /// Generate random instances or sources (seeded).
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Brute,
    Iterate,
    Ellipsoid,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Brute => Method::BruteForce,
            MethodArg::Iterate => Method::Iterate,
            MethodArg::Ellipsoid => Method::Ellipsoid,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// JSON instance file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "iterate")]
    method: MethodArg,
    /// Bounding box for the ellipsoid phase: "l1,r1;l2,r2;...".
    #[arg(long = "box")]
    bbox: Option<String>,
    /// Ellipsoid objective tolerance.
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,
    /// Oracle-call budget for the ellipsoid phase.
    #[arg(long)]
    budget: Option<usize>,
    /// Starting point for the iteration: "x1,x2,...".
    #[arg(long)]
    x0: Option<String>,
    /// Write the iteration trace to this file as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AifvCommand {
    /// Build a minimum-cost code for a source.
    Solve(AifvSolveArgs),
    /// Encode stdin symbols (letters) to bits on stdout.
    Encode(AifvCodecArgs),
    /// Decode stdin bits to symbols on stdout.
    Decode(AifvDecodeArgs),
}

#[derive(Args)]
struct AifvSolveArgs {
    /// Probabilities file: one "p/q" per line, or a JSON source object.
    #[arg(long)]
    probs: PathBuf,
    /// Number of code trees.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Search height cap; default n + m.
    #[arg(long)]
    height_cap: Option<usize>,
    /// Use the provably sufficient height bound (slow).
    #[arg(long)]
    full_height: bool,
    #[arg(long, value_enum, default_value = "iterate")]
    method: MethodArg,
    /// Write the winning code to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AifvCodecArgs {
    /// Code file produced by `aifv solve`.
    #[arg(long)]
    code: PathBuf,
}

#[derive(Args)]
struct AifvDecodeArgs {
    #[arg(long)]
    code: PathBuf,
    /// Decode exactly this many symbols (emits trailing empty codewords).
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Query x coordinates: "x1,x2,...".
    #[arg(long)]
    x: String,
    /// Query height y.
    #[arg(long)]
    y: Option<String>,
    #[arg(long = "box")]
    bbox: Option<String>,
    #[arg(long, default_value = "0")]
    y_floor: String,
}

#[derive(Args)]
struct EnvelopeDumpArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "0")]
    from: String,
    #[arg(long, default_value = "1")]
    to: String,
    #[arg(long, default_value = "1/100")]
    step: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Chain,
    Source,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Maximum states per family (chain instances).
    #[arg(long, default_value_t = 3)]
    states: usize,
    /// Symbol count (sources).
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Probability resolution: probabilities are multiples of 2^-b.
    #[arg(long, default_value_t = 4)]
    b: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
struct CliError {
    exit: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn parse(message: impl Into<String>) -> Self {
        CliError {
            exit: EXIT_PARSE,
            kind: "parse",
            message: message.into(),
        }
    }
    fn validation(message: impl Into<String>) -> Self {
        CliError {
            exit: EXIT_VALIDATION,
            kind: "validation",
            message: message.into(),
        }
    }
    fn budget(message: impl Into<String>) -> Self {
        CliError {
            exit: EXIT_BUDGET,
            kind: "budget",
            message: message.into(),
        }
    }
    fn internal(message: impl Into<String>) -> Self {
        CliError {
            exit: EXIT_INTERNAL,
            kind: "internal",
            message: message.into(),
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        match e {
            io::IoError::Parse(m) => CliError::parse(m),
            io::IoError::Validation(m) => CliError::validation(m),
        }
    }
}

impl From<solvers::SolveError> for CliError {
    fn from(e: solvers::SolveError) -> Self {
        match e {
            solvers::SolveError::BudgetExceeded { .. }
            | solvers::SolveError::EllipsoidNoFeasiblePoint(_) => CliError::budget(e.to_string()),
            solvers::SolveError::EmptyRestrictedFamily(_) => CliError::validation(e.to_string()),
            _ => CliError::internal(e.to_string()),
        }
    }
}

impl From<aifv::AifvError> for CliError {
    fn from(e: aifv::AifvError) -> Self {
        match io::exit_code_for_aifv(&e) {
            2 => CliError::parse(e.to_string()),
            4 => CliError::budget(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Aifv(cmd) => match cmd {
            AifvCommand::Solve(args) => cmd_aifv_solve(args),
            AifvCommand::Encode(args) => cmd_aifv_encode(args),
            AifvCommand::Decode(args) => cmd_aifv_decode(args),
        },
        Command::Oracle(args) => cmd_oracle(args),
        Command::EnvelopeDump(args) => cmd_envelope_dump(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json_errors {
                eprintln!(
                    "{}",
                    json!({ "error": e.kind, "message": e.message })
                );
            } else {
                eprintln!("error ({}): {}", e.kind, e.message);
            }
            ExitCode::from(e.exit)
        }
    }
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))
}

fn parse_rat_arg(context: &str, s: &str) -> Result<Rational, CliError> {
    parse_rational(s).map_err(|_| CliError::parse(format!("{context}: bad rational {s:?}")))
}

fn parse_point(s: &str, m: usize) -> Result<PointX, CliError> {
    let coords = s
        .split(',')
        .map(|c| parse_rat_arg("point", c.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if coords.len() != m - 1 {
        return Err(CliError::validation(format!(
            "point has {} coordinates, expected {}",
            coords.len(),
            m - 1
        )));
    }
    Ok(PointX(coords))
}

fn parse_box(s: &str, m: usize) -> Result<BoundingBox, CliError> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in s.split(';') {
        let (l, r) = part
            .split_once(',')
            .ok_or_else(|| CliError::parse(format!("box interval {part:?} needs \"l,r\"")))?;
        lo.push(parse_rat_arg("box", l.trim())?);
        hi.push(parse_rat_arg("box", r.trim())?);
    }
    if lo.len() != m - 1 {
        return Err(CliError::validation(format!(
            "box has {} intervals, expected {}",
            lo.len(),
            m - 1
        )));
    }
    if lo.iter().zip(&hi).any(|(l, r)| l > r) {
        return Err(CliError::validation("box has an empty interval".to_string()));
    }
    Ok(BoundingBox::new(lo, hi))
}

fn env_threads() -> usize {
    std::env::var("MCPOLY_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1)
}

fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let fams = io::instance_from_json(&read_file(&args.input)?)?;
    let mut opts = SolveOptions {
        eps: args.eps,
        ellipsoid_budget: args.budget,
        threads: env_threads(),
        ..Default::default()
    };
    if let Some(b) = &args.bbox {
        opts.bbox = Some(parse_box(b, fams.m())?);
    }
    if let Some(x0) = &args.x0 {
        opts.x0 = Some(parse_point(x0, fams.m())?);
    }
    let report = solvers::solve(&fams, args.method.into(), &opts)?;
    if let Some(path) = &args.trace {
        let dto = io::report_to_dto(&report);
        std::fs::write(path, serde_json::to_string_pretty(&dto.trace).unwrap())
            .map_err(|e| CliError::internal(format!("cannot write trace: {e}")))?;
    }
    println!("{}", io::report_to_json(&report));
    Ok(())
}

fn cmd_aifv_solve(args: &AifvSolveArgs) -> Result<(), CliError> {
    if args.m < 2 {
        return Err(CliError::validation("m must be at least 2".to_string()));
    }
    let src = io::source_from_text(&read_file(&args.probs)?)?;
    let n = src.n();
    let cap = args.height_cap.unwrap_or_else(|| {
        if args.full_height {
            aifv::full_height_bound(n, args.m)
        } else {
            aifv::default_height_cap(n, args.m)
        }
    });
    let fams = aifv::families_from_source(&src, args.m, cap)?;
    let opts = SolveOptions {
        threads: env_threads(),
        ..Default::default()
    };
    let report = solvers::solve(&fams, args.method.into(), &opts)?;
    let code = aifv::code_from_chain(&report.chain)?;
    let (huff_lengths, huff_cost) = aifv::huffman(&src);
    let entropy = src.entropy();
    let cost_f = rational_to_f64(&report.cost);
    let out = json!({
        "m": args.m,
        "height_cap": cap,
        "cost": format_rational(&report.cost),
        "cost_float": cost_f,
        "entropy": entropy,
        "redundancy": cost_f - entropy,
        "huffman_cost": format_rational(&huff_cost),
        "huffman_lengths": huff_lengths,
        "family_sizes": fams.families().iter().map(Vec::len).collect::<Vec<_>>(),
        "solver": report.solver,
        "trees": code.trees.iter().map(|t| aifv::serialize_tree(&t.root)).collect::<Vec<_>>(),
    });
    if let Some(path) = &args.output {
        std::fs::write(path, io::code_to_json(&code, &src))
            .map_err(|e| CliError::internal(format!("cannot write code file: {e}")))?;
    }
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
    Ok(())
}

fn read_stdin() -> Result<String, CliError> {
    let mut buf = String::new();
    std::io::stdin()
        .read_to_string(&mut buf)
        .map_err(|e| CliError::parse(format!("cannot read stdin: {e}")))?;
    Ok(buf)
}

fn cmd_aifv_encode(args: &AifvCodecArgs) -> Result<(), CliError> {
    let (code, src) = io::code_from_json(&read_file(&args.code)?)?;
    let text = read_stdin()?;
    let mut message = Vec::new();
    for c in text.chars() {
        if c.is_whitespace() {
            continue;
        }
        let idx = aifv::symbol_index(c)
            .filter(|&i| i < src.n())
            .ok_or_else(|| CliError::validation(format!("symbol {c:?} not in the alphabet")))?;
        message.push(idx);
    }
    let bits = aifv::encode(&code, &message, src.n())
        .map_err(|e| CliError::validation(e.to_string()))?;
    let line: String = bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect();
    println!("{line}");
    Ok(())
}

fn cmd_aifv_decode(args: &AifvDecodeArgs) -> Result<(), CliError> {
    let (code, _) = io::code_from_json(&read_file(&args.code)?)?;
    let text = read_stdin()?;
    let mut bits = Vec::new();
    for c in text.chars() {
        match c {
            '0' => bits.push(0u8),
            '1' => bits.push(1u8),
            c if c.is_whitespace() => {}
            c => return Err(CliError::parse(format!("bit stream contains {c:?}"))),
        }
    }
    let outcome = match args.count {
        Some(count) => aifv::decode_exact(&code, &bits, count),
        None => aifv::decode(&code, &bits),
    }
    .map_err(|e| CliError::validation(e.to_string()))?;
    let line: String = outcome.symbols.iter().map(|&s| aifv::symbol_char(s)).collect();
    println!("{line}");
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let fams = io::instance_from_json(&read_file(&args.input)?)?;
    let m = fams.m();
    let x = parse_point(&args.x, m)?;
    let full = Restriction::full(m);
    let env = envelope(&fams, &x, &full).map_err(|e| CliError::validation(e.to_string()))?;
    let per_type: Vec<_> = (0..m)
        .map(|k| {
            json!({
                "k": k,
                "g": format_rational(env.g(k)),
                "argmin": fams.family(k)[env.argmin(k)].label,
            })
        })
        .collect();
    let mut out = json!({
        "x": x.0.iter().map(format_rational).collect::<Vec<_>>(),
        "h": format_rational(&env.h),
        "per_type": per_type,
    });
    if let Some(y) = &args.y {
        let y = parse_rat_arg("y", y)?;
        let bbox = match &args.bbox {
            Some(b) => parse_box(b, m)?,
            None => BoundingBox::unit(m),
        };
        let y_floor = parse_rat_arg("y-floor", &args.y_floor)?;
        let sep = separate(&fams, &x, &y, &bbox, &y_floor)
            .map_err(|e| CliError::validation(e.to_string()))?;
        out["y"] = json!(format_rational(&y));
        out["verdict"] = json!(match sep.verdict {
            Verdict::Inside => "inside",
            Verdict::Outside => "outside",
        });
        if let Some(hp) = sep.hyperplane {
            out["hyperplane"] = json!({
                "normal": hp.normal.iter().map(format_rational).collect::<Vec<_>>(),
                "offset": format_rational(&hp.offset),
                "provenance": hp.provenance,
            });
        }
    }
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
    Ok(())
}

/// Twelve significant digits, plain notation.
fn sig12(v: f64) -> String {
    let s = format!("{v:.12e}");
    // round-trip through the exponential form to cap the significant digits
    s.parse::<f64>().map(|r| r.to_string()).unwrap_or(s)
}

fn cmd_envelope_dump(args: &EnvelopeDumpArgs) -> Result<(), CliError> {
    let fams = io::instance_from_json(&read_file(&args.input)?)?;
    if fams.m() != 2 {
        return Err(CliError::validation(format!(
            "envelope-dump supports m = 2 only, instance has m = {}",
            fams.m()
        )));
    }
    let from = parse_rat_arg("from", &args.from)?;
    let to = parse_rat_arg("to", &args.to)?;
    let step = parse_rat_arg("step", &args.step)?;
    if step <= Rational::from_integer(0.into()) {
        return Err(CliError::validation("step must be positive".to_string()));
    }
    let full = Restriction::full(2);
    println!("x,g0,g1,h");
    let mut x = from;
    while x <= to {
        let point = PointX(vec![x.clone()]);
        let env = envelope(&fams, &point, &full).map_err(|e| CliError::validation(e.to_string()))?;
        println!(
            "{},{},{},{}",
            sig12(rational_to_f64(&x)),
            sig12(rational_to_f64(env.g(0))),
            sig12(rational_to_f64(env.g(1))),
            sig12(rational_to_f64(&env.h)),
        );
        x += &step;
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    match args.kind {
        GenKind::Chain => {
            if args.m < 2 {
                return Err(CliError::validation("m must be at least 2".to_string()));
            }
            let fams = mcpoly::gen::random_families(&mut rng, args.m, args.states);
            println!("{}", io::instance_to_json(&fams));
        }
        GenKind::Source => {
            if (1u64 << args.b) < args.n as u64 {
                return Err(CliError::validation(
                    "need 2^b >= n to give every symbol positive probability".to_string(),
                ));
            }
            let src = mcpoly::gen::random_source(&mut rng, args.n, args.b);
            let dto = io::SourceDto::from_source(&src);
            println!("{}", serde_json::to_string_pretty(&dto).unwrap());
        }
    }
    Ok(())
}
