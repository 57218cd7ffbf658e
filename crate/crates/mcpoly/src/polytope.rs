//! Lower envelopes, the Markov chain polytope, P-restricted families, and
//! the separation oracle (with box constraints for the ellipsoid phase).

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::chain::{f, PointX, State, StateFamilies};
use crate::numerics::{bit_size, format_rational, Rational, Vector};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("family {family} has no state transitioning only into {allowed:?}")]
pub struct EmptyRestrictedFamily {
    pub family: usize,
    pub allowed: Vec<usize>,
}

/// An index set P with 0 always included; restricting to P keeps only the
/// states whose support lies inside P.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restriction {
    allowed: BTreeSet<usize>,
}

impl Restriction {
    pub fn new(allowed: impl IntoIterator<Item = usize>) -> Self {
        let mut allowed: BTreeSet<usize> = allowed.into_iter().collect();
        allowed.insert(0);
        Restriction { allowed }
    }

    pub fn full(m: usize) -> Self {
        Restriction {
            allowed: (0..m).collect(),
        }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.allowed.contains(&k)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.allowed.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        false // 0 is always present
    }

    pub fn admits(&self, state: &State) -> bool {
        state.support().iter().all(|j| self.allowed.contains(j))
    }
}

/// Families filtered to states that only transition into `p`. Families may
/// come back empty; callers decide whether that is fatal.
pub fn restrict_family(fams: &StateFamilies, p: &Restriction) -> StateFamilies {
    let families = fams
        .families()
        .iter()
        .map(|family| family.iter().filter(|s| p.admits(s)).cloned().collect())
        .collect();
    StateFamilies::from_parts_unchecked(fams.m(), families)
}

/// Per-type envelope values at a point: `g_k(x)` with the argmin state
/// (index into the unrestricted family), plus `h(x) = min_k g_k(x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopeResult {
    pub per_type: Vec<(Rational, usize)>,
    pub h: Rational,
}

impl EnvelopeResult {
    pub fn g(&self, k: usize) -> &Rational {
        &self.per_type[k].0
    }

    pub fn argmin(&self, k: usize) -> usize {
        self.per_type[k].1
    }

    pub fn argmin_indices(&self) -> Vec<usize> {
        self.per_type.iter().map(|(_, i)| *i).collect()
    }
}

/// Exact per-type minimization of `f_k` over the P-restricted families.
/// Ties go to the lowest index in the family's stored order, which keeps
/// fixed points of the iterative solver reproducible.
pub fn envelope(
    fams: &StateFamilies,
    x: &PointX,
    p: &Restriction,
) -> Result<EnvelopeResult, EmptyRestrictedFamily> {
    let mut per_type = Vec::with_capacity(fams.m());
    for k in 0..fams.m() {
        let mut best: Option<(Rational, usize)> = None;
        for (i, s) in fams.family(k).iter().enumerate() {
            if !p.admits(s) {
                continue;
            }
            let v = f(k, x, s);
            match &best {
                Some((cur, _)) if *cur <= v => {}
                _ => best = Some((v, i)),
            }
        }
        per_type.push(best.ok_or_else(|| EmptyRestrictedFamily {
            family: k,
            allowed: p.indices().collect(),
        })?);
    }
    let h = per_type
        .iter()
        .map(|(g, _)| g.clone())
        .min()
        .expect("m >= 2 families");
    Ok(EnvelopeResult { per_type, h })
}

/// Axis-aligned box for the x coordinates (k = 1..m-1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundingBox {
    pub lo: Vector,
    pub hi: Vector,
}

impl BoundingBox {
    pub fn new(lo: Vector, hi: Vector) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(l, r)| l <= r));
        BoundingBox { lo, hi }
    }

    /// The unit cube [0,1]^{m-1}.
    pub fn unit(m: usize) -> Self {
        BoundingBox {
            lo: vec![Rational::zero(); m - 1],
            hi: vec![Rational::one(); m - 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &PointX) -> bool {
        x.0.iter()
            .enumerate()
            .all(|(i, v)| &self.lo[i] <= v && v <= &self.hi[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Inside,
    Outside,
}

/// A separating hyperplane `a . w <= offset` satisfied by every polytope
/// point and violated by the query. Coordinates of `a` are
/// (x_1, ..., x_{m-1}, y).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperplane {
    pub normal: Vector,
    pub offset: Rational,
    pub provenance: String,
}

impl Hyperplane {
    pub fn dot(&self, x: &PointX, y: &Rational) -> Rational {
        let mut acc: Rational = self
            .normal
            .iter()
            .take(x.0.len())
            .zip(&x.0)
            .map(|(a, v)| a * v)
            .sum();
        acc += self.normal.last().expect("nonempty normal") * y;
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparationResult {
    pub verdict: Verdict,
    pub hyperplane: Option<Hyperplane>,
}

impl SeparationResult {
    pub fn is_inside(&self) -> bool {
        matches!(self.verdict, Verdict::Inside)
    }
}

/// Separation oracle for `MCP ∩ (box × [y_floor, ∞))`.
///
/// Three steps: the y floor, the box facets, then the envelope. When the
/// query lies above the envelope, the supporting plane of the h-attaining
/// (k, state) pair is returned.
pub fn separate(
    fams: &StateFamilies,
    x: &PointX,
    y: &Rational,
    bbox: &BoundingBox,
    y_floor: &Rational,
) -> Result<SeparationResult, EmptyRestrictedFamily> {
    let m = fams.m();
    if y < y_floor {
        let mut normal = vec![Rational::zero(); m];
        normal[m - 1] = -Rational::one();
        return Ok(SeparationResult {
            verdict: Verdict::Outside,
            hyperplane: Some(Hyperplane {
                normal,
                offset: -y_floor.clone(),
                provenance: format!("below y floor {}", format_rational(y_floor)),
            }),
        });
    }
    for i in 0..bbox.dim() {
        let (violated, sign, bound, side) = if x.0[i] < bbox.lo[i] {
            (true, -Rational::one(), -&bbox.lo[i], "left")
        } else if x.0[i] > bbox.hi[i] {
            (true, Rational::one(), bbox.hi[i].clone(), "right")
        } else {
            (false, Rational::zero(), Rational::zero(), "")
        };
        if violated {
            let mut normal = vec![Rational::zero(); m];
            normal[i] = sign;
            return Ok(SeparationResult {
                verdict: Verdict::Outside,
                hyperplane: Some(Hyperplane {
                    normal,
                    offset: bound,
                    provenance: format!("{side} box facet for x_{}", i + 1),
                }),
            });
        }
    }
    let env = envelope(fams, x, &Restriction::full(m))?;
    if *y <= env.h {
        return Ok(SeparationResult {
            verdict: Verdict::Inside,
            hyperplane: None,
        });
    }
    let k = (0..m).find(|&k| *env.g(k) == env.h).expect("h attained");
    let s = &fams.family(k)[env.argmin(k)];
    // supporting plane y <= f_k(., s): y + x_k - sum_j q_j x_j <= l(s)
    let mut normal = vec![Rational::zero(); m];
    for j in 1..m {
        normal[j - 1] = -&s.transitions[j];
    }
    if k > 0 {
        normal[k - 1] += Rational::one();
    }
    normal[m - 1] = Rational::one();
    Ok(SeparationResult {
        verdict: Verdict::Outside,
        hyperplane: Some(Hyperplane {
            normal,
            offset: s.cost.clone(),
            provenance: format!("type-{k} plane of state {:?}", s.label),
        }),
    })
}

/// Maximum bit size of any inequality row `y + x_k - sum_j q_j x_j <= l(S)`
/// defining the polytope; parameterizes the ellipsoid iteration budget.
pub fn phi_bound(fams: &StateFamilies) -> u64 {
    let m = fams.m();
    let mut phi = 0;
    for k in 0..m {
        for s in fams.family(k) {
            let mut row = bit_size(&Rational::one()) + bit_size(&s.cost);
            for j in 1..m {
                let coeff = if j == k {
                    Rational::one() - &s.transitions[j]
                } else {
                    -&s.transitions[j]
                };
                row += bit_size(&coeff);
            }
            phi = phi.max(row);
        }
    }
    phi
}
