//! The three solution strategies for the minimum-cost Markov chain problem
//! plus the pruning post-processor.

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::chain::{cost, intersection_point, Chain, PointX, State, StateFamilies};
use crate::numerics::{format_rational, Rational};
use crate::polytope::{envelope, phi_bound, BoundingBox, EmptyRestrictedFamily, Restriction};

pub mod ellipsoid;

pub use ellipsoid::{EllipsoidOutcome, EllipsoidTraceStep};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("chain product {product} exceeds the brute-force budget {budget}")]
    BudgetExceeded { product: u128, budget: u128 },
    #[error("iteration cap {cap} exceeded; last x = {last_x:?} (tie-breaking cycle or invariant violation)")]
    IterationCapExceeded { cap: usize, last_x: Vec<String> },
    #[error("prune diverged: {0}")]
    PruneDiverged(String),
    #[error(transparent)]
    EmptyRestrictedFamily(#[from] EmptyRestrictedFamily),
    #[error("ellipsoid budget {0} exhausted before finding a feasible point")]
    EllipsoidNoFeasiblePoint(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    BruteForce,
    Iterate,
    Ellipsoid,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BruteForce => "brute-force",
            Method::Iterate => "iterate",
            Method::Ellipsoid => "ellipsoid",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Maximum number of chains brute force will evaluate.
    pub chain_budget: u128,
    /// Safety cap for the fixed-point iteration.
    pub iteration_cap: usize,
    /// Ellipsoid objective tolerance.
    pub eps: f64,
    /// Ellipsoid oracle-call budget; defaults to 10 m^2 (phi + 64).
    pub ellipsoid_budget: Option<usize>,
    /// Box assumed to contain a highest point (ellipsoid only).
    pub bbox: Option<BoundingBox>,
    /// Starting point for the iteration; all zeros when absent.
    pub x0: Option<PointX>,
    /// Worker count for brute force partitioning.
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            chain_budget: 1_000_000,
            iteration_cap: 10_000,
            eps: 1e-9,
            ellipsoid_budget: None,
            bbox: None,
            x0: None,
            threads: 1,
        }
    }
}

/// One step of the iterative solver's trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub iteration: usize,
    pub x: PointX,
    pub g: Vec<Rational>,
    pub h: Rational,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub chain: Chain,
    pub cost: Rational,
    pub trace: Vec<TraceStep>,
    pub solver: String,
    pub iterations: usize,
    /// Shift that was added to every state cost before the ellipsoid phase
    /// (and subtracted again from the reported cost).
    pub cost_shift: Option<Rational>,
    pub ellipsoid: Option<EllipsoidOutcome>,
}

impl SolveReport {
    fn check(self) -> Self {
        debug_assert_eq!(self.cost, cost(&self.chain));
        self
    }
}

fn min_chain_by_cost(
    fams: &StateFamilies,
    mut indices_iter: impl Iterator<Item = Vec<usize>>,
) -> Option<(Vec<usize>, Rational)> {
    let first = indices_iter.next()?;
    let mut best_cost = cost(&fams.chain(&first));
    let mut best = first;
    for idx in indices_iter {
        let c = cost(&fams.chain(&idx));
        if c < best_cost {
            best_cost = c;
            best = idx;
        }
    }
    Some((best, best_cost))
}

fn product_indices(sizes: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: u128 = sizes.iter().map(|&s| s as u128).product();
    (0..total).map(move |mut n| {
        let mut idx = vec![0usize; sizes.len()];
        for (k, &s) in sizes.iter().enumerate().rev() {
            idx[k] = (n % s as u128) as usize;
            n /= s as u128;
        }
        idx
    })
}

/// Exhaustive search over the chain product. Ties break lexicographically
/// on state indices (the enumeration order).
pub fn brute_force(fams: &StateFamilies, opts: &SolveOptions) -> Result<SolveReport, SolveError> {
    let sizes: Vec<usize> = fams.families().iter().map(Vec::len).collect();
    let product: u128 = sizes.iter().map(|&s| s as u128).product();
    if product > opts.chain_budget {
        return Err(SolveError::BudgetExceeded {
            product,
            budget: opts.chain_budget,
        });
    }
    let threads = opts.threads.max(1).min(sizes[0]);
    let (best_idx, best_cost) = if threads > 1 {
        // partition on the first family; each worker scans a contiguous slice
        let results: Vec<Option<(Vec<usize>, Rational)>> = std::thread::scope(|scope| {
            let chunk = sizes[0].div_ceil(threads);
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let sizes = &sizes;
                    scope.spawn(move || {
                        let lo = t * chunk;
                        let hi = ((t + 1) * chunk).min(sizes[0]);
                        let rest = &sizes[1..];
                        min_chain_by_cost(
                            fams,
                            (lo..hi).flat_map(move |i| {
                                product_indices(rest).map(move |mut idx| {
                                    idx.insert(0, i);
                                    idx
                                })
                            }),
                        )
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        results
            .into_iter()
            .flatten()
            .min_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then_with(|| ia.cmp(ib)))
            .expect("nonempty families")
    } else {
        min_chain_by_cost(fams, product_indices(&sizes)).expect("nonempty families")
    };
    let chain = fams.chain(&best_idx);
    Ok(SolveReport {
        cost: best_cost,
        chain,
        trace: Vec::new(),
        solver: Method::BruteForce.name().into(),
        iterations: 0,
        cost_shift: None,
        ellipsoid: None,
    }
    .check())
}

/// One application of the fixed-point map: pick the envelope-minimizing
/// chain at `z`, then project its distinctly-typed intersection point.
pub fn step_f(fams: &StateFamilies, z: &PointX) -> Result<PointX, SolveError> {
    let env = envelope(fams, z, &Restriction::full(fams.m()))?;
    let chain = fams.chain(&env.argmin_indices());
    let (x, _) = intersection_point(&chain);
    Ok(x)
}

/// The iterative fixed-point solver. Applies the envelope-intersection map
/// until the point repeats exactly.
pub fn iterate(
    fams: &StateFamilies,
    x0: PointX,
    opts: &SolveOptions,
) -> Result<SolveReport, SolveError> {
    let full = Restriction::full(fams.m());
    let mut x = x0;
    let mut trace = Vec::new();
    for iteration in 0..opts.iteration_cap {
        let env = envelope(fams, &x, &full)?;
        trace.push(TraceStep {
            iteration,
            x: x.clone(),
            g: env.per_type.iter().map(|(g, _)| g.clone()).collect(),
            h: env.h.clone(),
        });
        let chain = fams.chain(&env.argmin_indices());
        let (next, y) = intersection_point(&chain);
        if next == x {
            return Ok(SolveReport {
                chain,
                cost: y,
                trace,
                solver: Method::Iterate.name().into(),
                iterations: iteration + 1,
                cost_shift: None,
                ellipsoid: None,
            }
            .check());
        }
        x = next;
    }
    Err(SolveError::IterationCapExceeded {
        cap: opts.iteration_cap,
        last_x: x.0.iter().map(format_rational).collect(),
    })
}

/// Iterative pruning (at most m-1 shrink steps). Given a highest point
/// `(x_hat, y_hat)` of the polytope, shrinks R = [m] to the set of types
/// whose restricted envelope still attains y_hat, then materializes the
/// restricted argmin chain. Slots outside the final R are transient; they
/// are filled with the restricted argmin when one exists, otherwise with
/// the unrestricted one (their choice cannot affect the cost).
pub fn prune(
    fams: &StateFamilies,
    x_hat: &PointX,
    y_hat: &Rational,
    eq_tol: &Rational,
) -> Result<(Restriction, Chain), SolveError> {
    let m = fams.m();
    let mut r: Vec<usize> = (0..m).collect();
    // each non-final pass strictly shrinks R, so at most m passes run
    for _pass in 0..m {
        let p = Restriction::new(r.iter().copied());
        let restricted = crate::polytope::restrict_family(fams, &p);
        let mut r_next = Vec::new();
        for &k in &r {
            let best = restricted.family(k).iter().map(|s| crate::chain::f(k, x_hat, s)).min();
            if let Some(g) = best {
                if (&g - y_hat).abs() <= *eq_tol {
                    r_next.push(k);
                }
            }
        }
        if !r_next.contains(&0) {
            return Err(SolveError::PruneDiverged(format!(
                "type 0 dropped out at R = {r:?}; bad input point or tolerance"
            )));
        }
        if r_next == r {
            let mut indices = Vec::with_capacity(m);
            for k in 0..m {
                let pick = fams
                    .family(k)
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| p.admits(s))
                    .min_by_key(|(i, s)| (crate::chain::f(k, x_hat, s), *i))
                    .or_else(|| {
                        // empty restricted family at a transient slot
                        fams.family(k)
                            .iter()
                            .enumerate()
                            .min_by_key(|(i, s)| (crate::chain::f(k, x_hat, s), *i))
                    })
                    .map(|(i, _)| i)
                    .expect("families nonempty");
                indices.push(pick);
            }
            return Ok((p, fams.chain(&indices)));
        }
        r = r_next;
    }
    Err(SolveError::PruneDiverged(format!(
        "restriction failed to stabilize within {m} passes"
    )))
}

fn shift_costs(fams: &StateFamilies, shift: &Rational) -> StateFamilies {
    let families = fams
        .families()
        .iter()
        .map(|family| {
            family
                .iter()
                .map(|s| State::new(&s.cost + shift, s.transitions.clone(), s.label.clone()))
                .collect()
        })
        .collect();
    StateFamilies::from_parts_unchecked(fams.m(), families)
}

/// Full solve pipeline. For the ellipsoid method: shift costs nonnegative,
/// run the float ellipsoid for a highest point estimate, land on an exact
/// fixed point with one iterate pass seeded there, then prune at zero
/// tolerance. The shift is undone transparently.
pub fn solve(
    fams: &StateFamilies,
    method: Method,
    opts: &SolveOptions,
) -> Result<SolveReport, SolveError> {
    match method {
        Method::BruteForce => brute_force(fams, opts),
        Method::Iterate => {
            let x0 = opts.x0.clone().unwrap_or_else(|| PointX::origin(fams.m()));
            iterate(fams, x0, opts)
        }
        Method::Ellipsoid => {
            let min_cost = fams
                .families()
                .iter()
                .flatten()
                .map(|s| s.cost.clone())
                .min()
                .expect("nonempty families");
            let m = fams.m();
            let bbox = opts
                .bbox
                .clone()
                .unwrap_or_else(|| BoundingBox::unit(m));
            // Every plane satisfies f >= l_min + min(0, min lo_j) - max(0,
            // max hi_k) over the box, so shifting costs by enough to make
            // that bound positive guarantees the float phase always has
            // feasible points (any box point with y = 0).
            let worst_drop = bbox
                .hi
                .iter()
                .map(|v| v.clone().max(Rational::zero()))
                .max()
                .unwrap_or_else(Rational::zero)
                - bbox
                    .lo
                    .iter()
                    .map(|v| v.clone().min(Rational::zero()))
                    .min()
                    .unwrap_or_else(Rational::zero);
            let floor = &min_cost - &worst_drop;
            let shift = if floor.is_negative() {
                -floor + Rational::from_integer(1.into())
            } else {
                Rational::zero()
            };
            let shifted = if shift.is_zero() {
                fams.clone()
            } else {
                shift_costs(fams, &shift)
            };
            let budget = opts.ellipsoid_budget.unwrap_or_else(|| {
                let phi = phi_bound(&shifted) as usize;
                10 * m * m * (phi + 64)
            });
            let outcome = ellipsoid::ellipsoid_max_y(&shifted, &bbox, opts.eps, budget)?;
            // hand off to the exact pipeline
            let x_seed = PointX(outcome.x.iter().map(|&v| round_to_dyadic(v, 32)).collect());
            let fixed = iterate(&shifted, x_seed, opts)?;
            let x_star = &fixed.trace.last().expect("iterate records every step").x;
            let env = envelope(&shifted, x_star, &Restriction::full(m))?;
            let (_, pruned_chain) = prune(&shifted, x_star, &env.h, &Rational::zero())?;
            let chain = fams_chain_unshifted(fams, &shifted, &pruned_chain);
            let final_cost = cost(&chain);
            Ok(SolveReport {
                chain,
                cost: final_cost,
                trace: fixed.trace,
                solver: Method::Ellipsoid.name().into(),
                iterations: fixed.iterations,
                cost_shift: (!shift.is_zero()).then_some(shift),
                ellipsoid: Some(outcome),
            }
            .check())
        }
    }
}

/// Maps a chain built from shifted families back to the original states
/// (labels are unique enough at desk scale: match by label then position).
fn fams_chain_unshifted(fams: &StateFamilies, shifted: &StateFamilies, chain: &Chain) -> Chain {
    let indices: Vec<usize> = chain
        .states()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            shifted
                .family(k)
                .iter()
                .position(|t| t == s)
                .expect("state came from this family")
        })
        .collect();
    fams.chain(&indices)
}

/// Best-effort rational from a float: round to the nearest multiple of
/// 2^-bits. Keeps iterate's exact arithmetic fast after the float phase.
pub fn round_to_dyadic(v: f64, bits: u32) -> Rational {
    if !v.is_finite() {
        return Rational::zero();
    }
    let scale = (1u64 << bits) as f64;
    let n = (v * scale).round() as i128;
    Rational::new(n.into(), (1i128 << bits).into())
}
