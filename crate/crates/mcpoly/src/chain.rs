//! Markov chains with rewards: states, permissible chains, stationary
//! distributions, cost, type-k hyperplanes, and distinctly-typed
//! intersection points.

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::numerics::{self, format_rational, Matrix, Rational, Vector};

/// A single Markov state: a cost plus a transition distribution over the
/// `m` types. `label` is opaque and only used for reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub cost: Rational,
    pub transitions: Vector,
    pub label: String,
}

impl State {
    pub fn new(cost: Rational, transitions: Vector, label: impl Into<String>) -> Self {
        State {
            cost,
            transitions,
            label: label.into(),
        }
    }

    /// The set `P(S) = { j : q_j(S) > 0 }` of types this state can reach.
    pub fn support(&self) -> Vec<usize> {
        self.transitions
            .iter()
            .enumerate()
            .filter(|(_, q)| q.is_positive())
            .map(|(j, _)| j)
            .collect()
    }

    /// Checks the state invariants: `m` transition entries, all nonnegative,
    /// summing to one, with `q_0 > 0`.
    pub fn validate(&self, m: usize) -> Result<(), StateError> {
        if self.transitions.len() != m {
            return Err(StateError {
                label: self.label.clone(),
                field: "transitions".into(),
                message: format!("expected {m} entries, found {}", self.transitions.len()),
            });
        }
        if let Some((j, q)) = self
            .transitions
            .iter()
            .enumerate()
            .find(|(_, q)| q.is_negative())
        {
            return Err(StateError {
                label: self.label.clone(),
                field: format!("transitions[{j}]"),
                message: format!("negative probability {}", format_rational(q)),
            });
        }
        let total: Rational = self.transitions.iter().cloned().sum();
        if !total.is_one() {
            return Err(StateError {
                label: self.label.clone(),
                field: "transitions".into(),
                message: format!("probabilities sum to {}, expected 1", format_rational(&total)),
            });
        }
        if !self.transitions[0].is_positive() {
            return Err(StateError {
                label: self.label.clone(),
                field: "transitions[0]".into(),
                message: "q_0 must be strictly positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("state {label:?}, {field}: {message}")]
pub struct StateError {
    pub label: String,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FamiliesError {
    #[error("m must be at least 2, got {0}")]
    TooFewTypes(usize),
    #[error("family {0} is empty")]
    EmptyFamily(usize),
    #[error(transparent)]
    BadState(#[from] StateError),
}

/// The per-type state families `S_0, ..., S_{m-1}`; the search space is
/// their Cartesian product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateFamilies {
    m: usize,
    families: Vec<Vec<State>>,
}

impl StateFamilies {
    pub fn new(families: Vec<Vec<State>>) -> Result<Self, FamiliesError> {
        let m = families.len();
        if m < 2 {
            return Err(FamiliesError::TooFewTypes(m));
        }
        for (k, family) in families.iter().enumerate() {
            if family.is_empty() {
                return Err(FamiliesError::EmptyFamily(k));
            }
            for state in family {
                state.validate(m)?;
            }
        }
        Ok(StateFamilies { m, families })
    }

    /// Skips validation; used where families may legitimately be empty
    /// (P-restriction) or states are already validated.
    pub(crate) fn from_parts_unchecked(m: usize, families: Vec<Vec<State>>) -> Self {
        StateFamilies { m, families }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn family(&self, k: usize) -> &[State] {
        &self.families[k]
    }

    pub fn families(&self) -> &[Vec<State>] {
        &self.families
    }

    pub fn chain(&self, indices: &[usize]) -> Chain {
        assert_eq!(indices.len(), self.m);
        Chain {
            states: indices
                .iter()
                .enumerate()
                .map(|(k, &i)| self.families[k][i].clone())
                .collect(),
        }
    }
}

/// A permissible chain: one state of each type, slot `k` drawn from family `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    states: Vec<State>,
}

impl Chain {
    pub fn new(states: Vec<State>) -> Self {
        Chain { states }
    }

    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, k: usize) -> &State {
        &self.states[k]
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    /// Transition matrix Q, row k = transitions of the type-k state.
    pub fn transition_matrix(&self) -> Matrix {
        Matrix::from_rows(self.states.iter().map(|s| s.transitions.clone()).collect())
            .expect("states share the same transition arity")
    }
}

/// A point x in R^{m-1}; the `x_0` coordinate is identically zero by
/// convention and not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointX(pub Vector);

impl PointX {
    pub fn origin(m: usize) -> Self {
        PointX(vec![Rational::zero(); m - 1])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// x_j with the x_0 = 0 convention; valid for j in [0, m-1].
    pub fn coord(&self, j: usize) -> Rational {
        if j == 0 {
            Rational::zero()
        } else {
            self.0[j - 1].clone()
        }
    }
}

/// The unique stationary distribution of a permissible chain.
///
/// Solves pi Q = pi with sum(pi) = 1 by replacing the first equation of
/// `(Q^T - I) pi = 0` with the all-ones normalization row. `q_0 > 0` makes
/// the chain a unichain, so the system is nonsingular; transient states get
/// an exact zero.
pub fn stationary_distribution(chain: &Chain) -> Vector {
    let m = chain.m();
    let q = chain.transition_matrix();
    let mut a = Matrix::zeros(m, m);
    for j in 0..m {
        a[(0, j)] = Rational::one();
    }
    for i in 1..m {
        for j in 0..m {
            // row i of Q^T - I, i.e. column i of Q - I
            a[(i, j)] = &q[(j, i)] - if i == j { Rational::one() } else { Rational::zero() };
        }
    }
    let mut b = vec![Rational::zero(); m];
    b[0] = Rational::one();
    numerics::solve_linear(&a, &b)
        .expect("unichain stationary system is nonsingular for valid chains")
}

/// Average steady-state cost (gain): sum_k l(S_k) pi_k.
pub fn cost(chain: &Chain) -> Rational {
    let pi = stationary_distribution(chain);
    chain
        .states()
        .iter()
        .zip(&pi)
        .map(|(s, p)| &s.cost * p)
        .sum()
}

/// The type-k hyperplane evaluated at x:
/// `f_0(x, S) = l(S) + sum_j q_j(S) x_j` and
/// `f_k(x, S) = l(S) + sum_j q_j(S) x_j - x_k` for k > 0.
pub fn f(k: usize, x: &PointX, s: &State) -> Rational {
    let mut v = s.cost.clone();
    for j in 1..s.transitions.len() {
        v += &s.transitions[j] * &x.0[j - 1];
    }
    if k > 0 {
        v -= &x.0[k - 1];
    }
    v
}

/// The unique common point of the chain's m distinctly-typed hyperplanes.
///
/// Solves `M (-y, x_1, ..., x_{m-1}) = -l` where M is `Q - I` with its first
/// column replaced by ones. The returned height always equals `cost(chain)`;
/// a singular M signals an invariant violation upstream.
pub fn intersection_point(chain: &Chain) -> (PointX, Rational) {
    let m = chain.m();
    let q = chain.transition_matrix();
    let mut a = Matrix::zeros(m, m);
    for i in 0..m {
        a[(i, 0)] = Rational::one();
        for j in 1..m {
            a[(i, j)] = &q[(i, j)] - if i == j { Rational::one() } else { Rational::zero() };
        }
    }
    let b: Vector = chain.states().iter().map(|s| -&s.cost).collect();
    let sol = numerics::solve_linear(&a, &b)
        .expect("distinctly-typed intersection is unique for valid chains");
    let y = -sol[0].clone();
    let x = PointX(sol[1..].to_vec());
    debug_assert_eq!(y, cost(chain));
    (x, y)
}

/// `sum_k f_k(x, S_k) pi_k`, which equals `cost(chain)` for every x.
/// Exposed for the property suites.
pub fn weighted_plane_identity(chain: &Chain, x: &PointX) -> Rational {
    let pi = stationary_distribution(chain);
    chain
        .states()
        .iter()
        .enumerate()
        .zip(&pi)
        .map(|((k, s), p)| f(k, x, s) * p)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rat, rat_int};

    fn two_state_chain() -> Chain {
        // S_0: l=1, q=(1/2,1/2); S_1: l=2, q=(1,0)
        Chain::new(vec![
            State::new(rat_int(1), vec![rat(1, 2), rat(1, 2)], "s0"),
            State::new(rat_int(2), vec![rat_int(1), rat_int(0)], "s1"),
        ])
    }

    #[test]
    fn absorbing_at_zero() {
        let c = Chain::new(vec![
            State::new(rat_int(5), vec![rat_int(1), rat_int(0), rat_int(0)], "a"),
            State::new(rat_int(7), vec![rat_int(1), rat_int(0), rat_int(0)], "b"),
            State::new(rat_int(9), vec![rat_int(1), rat_int(0), rat_int(0)], "c"),
        ]);
        assert_eq!(
            stationary_distribution(&c),
            vec![rat_int(1), rat_int(0), rat_int(0)]
        );
        assert_eq!(cost(&c), rat_int(5));
    }

    #[test]
    fn stationary_m2() {
        let pi = stationary_distribution(&two_state_chain());
        assert_eq!(pi, vec![rat(2, 3), rat(1, 3)]);
    }

    #[test]
    fn cost_m2() {
        assert_eq!(cost(&two_state_chain()), rat(4, 3));
    }

    #[test]
    fn constant_reward_invariance() {
        let c = Chain::new(vec![
            State::new(rat(7, 2), vec![rat(1, 3), rat(2, 3)], "a"),
            State::new(rat(7, 2), vec![rat(1, 4), rat(3, 4)], "b"),
        ]);
        assert_eq!(cost(&c), rat(7, 2));
        let (_, y) = intersection_point(&c);
        assert_eq!(y, rat(7, 2));
    }

    #[test]
    fn hyperplane_at_origin_is_cost() {
        let c = two_state_chain();
        let x = PointX::origin(2);
        for k in 0..2 {
            assert_eq!(f(k, &x, c.state(k)), c.state(k).cost);
        }
    }

    #[test]
    fn hyperplane_type_offset() {
        // f_k(x, s) + x_k = f_0(x, s) for the same state viewed as both types
        let s = State::new(rat(13, 8), vec![rat(1, 4), rat(1, 2), rat(1, 4)], "t");
        let x = PointX(vec![rat(3, 5), rat(-2, 7)]);
        assert_eq!(f(1, &x, &s) + x.coord(1), f(0, &x, &s));
        assert_eq!(f(2, &x, &s) + x.coord(2), f(0, &x, &s));
    }

    #[test]
    fn intersection_m2() {
        // hand-solved: 1 + x/2 = 2 - x at x = 2/3, y = 4/3
        let (x, y) = intersection_point(&two_state_chain());
        assert_eq!(x.0, vec![rat(2, 3)]);
        assert_eq!(y, rat(4, 3));
    }

    #[test]
    fn weighted_identity_is_x_independent() {
        let c = two_state_chain();
        assert_eq!(weighted_plane_identity(&c, &PointX(vec![rat_int(7)])), rat(4, 3));
        assert_eq!(weighted_plane_identity(&c, &PointX(vec![rat(-9, 4)])), rat(4, 3));
    }

    #[test]
    fn state_validation() {
        let bad_sum = State::new(rat_int(1), vec![rat_int(1), rat_int(1)], "bad");
        assert!(bad_sum.validate(2).is_err());
        let no_q0 = State::new(rat_int(1), vec![rat_int(0), rat_int(1)], "bad");
        assert!(no_q0.validate(2).is_err());
        let neg = State::new(rat_int(1), vec![rat(3, 2), rat(-1, 2)], "bad");
        assert!(neg.validate(2).is_err());
        let ok = State::new(rat_int(1), vec![rat(1, 2), rat(1, 2)], "ok");
        assert!(ok.validate(2).is_ok());
    }
}
