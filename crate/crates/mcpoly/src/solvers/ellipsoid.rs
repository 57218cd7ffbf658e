//! Central-cut ellipsoid phase, run entirely in f64.
//!
//! Maximizes y over the polytope intersected with the bounding box and the
//! half-space y >= 0 (callers shift costs nonnegative first). The result is
//! only a seed: the exact pipeline lands on the true optimum afterwards, so
//! float round-off here costs extra iterations, never correctness.

use crate::chain::StateFamilies;
use crate::numerics::rational_to_f64;
use crate::polytope::BoundingBox;

use super::SolveError;

const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EllipsoidTraceStep {
    pub iteration: usize,
    pub center: Vec<f64>,
    pub feasible: bool,
    pub best_y: f64,
}

#[derive(Debug, Clone)]
pub struct EllipsoidOutcome {
    /// Best feasible x found (length m - 1).
    pub x: Vec<f64>,
    /// Height at that x.
    pub y: f64,
    pub iterations: usize,
    pub trace: Vec<EllipsoidTraceStep>,
}

/// Float snapshot of the families: (cost, transitions) per state.
struct FloatFamilies {
    families: Vec<Vec<(f64, Vec<f64>)>>,
}

impl FloatFamilies {
    fn new(fams: &StateFamilies) -> Self {
        FloatFamilies {
            families: fams
                .families()
                .iter()
                .map(|family| {
                    family
                        .iter()
                        .map(|s| {
                            (
                                rational_to_f64(&s.cost),
                                s.transitions.iter().map(rational_to_f64).collect(),
                            )
                        })
                        .collect()
                })
                .collect(),
        }
    }

    fn m(&self) -> usize {
        self.families.len()
    }

    /// g_k(x) together with the transitions of the argmin state.
    fn g(&self, k: usize, x: &[f64]) -> (f64, &[f64]) {
        let mut best = f64::INFINITY;
        let mut arg: &[f64] = &[];
        for (cost, q) in &self.families[k] {
            let mut v = *cost;
            for j in 1..q.len() {
                v += q[j] * x[j - 1];
            }
            if k > 0 {
                v -= x[k - 1];
            }
            if v < best {
                best = v;
                arg = q;
            }
        }
        (best, arg)
    }
}

/// Float separation at z = (x, y). Returns `None` when feasible, otherwise
/// the outward normal `a` of a violated inequality `a . z <= b`.
fn float_cut(ff: &FloatFamilies, bbox: &(Vec<f64>, Vec<f64>), z: &[f64]) -> Option<Vec<f64>> {
    let m = ff.m();
    let (x, y) = (&z[..m - 1], z[m - 1]);
    if y < 0.0 {
        let mut a = vec![0.0; m];
        a[m - 1] = -1.0;
        return Some(a);
    }
    for i in 0..m - 1 {
        if x[i] < bbox.0[i] {
            let mut a = vec![0.0; m];
            a[i] = -1.0;
            return Some(a);
        }
        if x[i] > bbox.1[i] {
            let mut a = vec![0.0; m];
            a[i] = 1.0;
            return Some(a);
        }
    }
    let mut h = f64::INFINITY;
    let mut cut: Option<Vec<f64>> = None;
    for k in 0..m {
        let (g, q) = ff.g(k, x);
        if g < h {
            h = g;
            // y + x_k - sum_j q_j x_j <= l(S)
            let mut a = vec![0.0; m];
            for j in 1..m {
                a[j - 1] = -q[j];
            }
            if k > 0 {
                a[k - 1] += 1.0;
            }
            a[m - 1] = 1.0;
            cut = Some(a);
        }
    }
    if y <= h + FEASIBILITY_SLACK {
        None
    } else {
        cut
    }
}

/// Sliding-objective central-cut ellipsoid.
///
/// Starts from a ball containing box x [0, U] with U an upper bound on the
/// polytope height, alternates feasibility cuts (from the oracle) with
/// objective cuts `y >= y_center` at feasible centers, and stops when the
/// ellipsoid's extent along the y axis drops below `eps` or the budget runs
/// out. Returns the best feasible center seen.
pub fn ellipsoid_max_y(
    fams: &StateFamilies,
    bbox: &BoundingBox,
    eps: f64,
    budget: usize,
) -> Result<EllipsoidOutcome, SolveError> {
    let m = fams.m();
    let n = m; // m - 1 x coordinates plus y
    let ff = FloatFamilies::new(fams);
    let lo: Vec<f64> = bbox.lo.iter().map(rational_to_f64).collect();
    let hi: Vec<f64> = bbox.hi.iter().map(rational_to_f64).collect();
    let fbox = (lo.clone(), hi.clone());

    // height never exceeds any state cost plus the box reach of its plane
    let max_reach: f64 = hi.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let u = ff
        .families
        .iter()
        .flatten()
        .map(|(c, _)| *c)
        .fold(0.0, f64::max)
        * (1.0 + max_reach)
        + 1.0;

    let mut center: Vec<f64> = (0..n - 1).map(|i| 0.5 * (lo[i] + hi[i])).collect();
    center.push(0.5 * u);
    let radius2: f64 = (0..n - 1)
        .map(|i| 0.25 * (hi[i] - lo[i]).powi(2))
        .sum::<f64>()
        + 0.25 * u * u;
    let radius2 = radius2.max(1.0) * 1.5;
    // shape matrix B = R^2 I, updated in place
    let mut b: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { radius2 } else { 0.0 }).collect())
        .collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;

    for it in 0..budget {
        iterations = it + 1;
        let cut = float_cut(&ff, &fbox, &center);
        let feasible = cut.is_none();
        if feasible {
            let y = center[n - 1];
            if best.as_ref().is_none_or(|(_, by)| y > *by) {
                best = Some((center[..n - 1].to_vec(), y));
            }
        }
        trace.push(EllipsoidTraceStep {
            iteration: it,
            center: center.clone(),
            feasible,
            best_y: best.as_ref().map_or(f64::NEG_INFINITY, |(_, y)| *y),
        });
        let a = cut.unwrap_or_else(|| {
            // objective cut: keep y >= current center height
            let mut a = vec![0.0; n];
            a[n - 1] = -1.0;
            a
        });
        // ba = B a, gamma^2 = a^T B a
        let ba: Vec<f64> = (0..n).map(|i| (0..n).map(|j| b[i][j] * a[j]).sum()).collect();
        let gamma2: f64 = (0..n).map(|i| a[i] * ba[i]).sum();
        if !(gamma2.is_finite() && gamma2 > 0.0) {
            break;
        }
        let gamma = gamma2.sqrt();
        if feasible && gamma <= eps {
            break;
        }
        let nf = n as f64;
        for i in 0..n {
            center[i] -= ba[i] / (gamma * (nf + 1.0));
        }
        let scale = nf * nf / (nf * nf - 1.0);
        let rank1 = 2.0 / ((nf + 1.0) * gamma2);
        for i in 0..n {
            for j in 0..n {
                b[i][j] = scale * (b[i][j] - rank1 * ba[i] * ba[j]);
            }
        }
    }

    match best {
        Some((x, y)) => Ok(EllipsoidOutcome {
            x,
            y,
            iterations,
            trace,
        }),
        None => Err(SolveError::EllipsoidNoFeasiblePoint(budget)),
    }
}
