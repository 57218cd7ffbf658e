//! Seeded random instance generators, shared by the CLI `gen` subcommand
//! and the property suites.

use num_bigint::BigInt;
use rand::Rng;

use crate::aifv::SourceSpec;
use crate::chain::{State, StateFamilies};
use crate::numerics::Rational;

/// A random transition row over `m` types with dyadic entries of
/// denominator 2^r and q_0 > 0.
pub fn random_transitions<R: Rng>(rng: &mut R, m: usize, r: u32) -> Vec<Rational> {
    let total = 1u64 << r;
    // composition of `total` into m nonnegative parts, first part >= 1
    let mut parts = vec![0u64; m];
    parts[0] = 1;
    let mut remaining = total - 1;
    for j in 0..m {
        let add = if j + 1 == m {
            remaining
        } else {
            rng.gen_range(0..=remaining)
        };
        parts[j] += add;
        remaining -= add;
    }
    parts
        .into_iter()
        .map(|p| Rational::new(BigInt::from(p), BigInt::from(total)))
        .collect()
}

/// A random cost in [0, 8) with denominator 8.
pub fn random_cost<R: Rng>(rng: &mut R) -> Rational {
    Rational::new(BigInt::from(rng.gen_range(0..64)), BigInt::from(8))
}

/// Random valid families: `m` types, 1..=max_states states each.
pub fn random_families<R: Rng>(rng: &mut R, m: usize, max_states: usize) -> StateFamilies {
    let families = (0..m)
        .map(|k| {
            let count = rng.gen_range(1..=max_states);
            (0..count)
                .map(|i| {
                    State::new(
                        random_cost(rng),
                        random_transitions(rng, m, 3),
                        format!("s{k}_{i}"),
                    )
                })
                .collect()
        })
        .collect();
    StateFamilies::new(families).expect("generated states satisfy the invariants")
}

/// A random chain: singleton families collapsed to one state per type.
pub fn random_chain<R: Rng>(rng: &mut R, m: usize) -> crate::chain::Chain {
    crate::chain::Chain::new(
        (0..m)
            .map(|k| {
                State::new(
                    random_cost(rng),
                    random_transitions(rng, m, 3),
                    format!("c{k}"),
                )
            })
            .collect(),
    )
}

/// A random dyadic source: n probabilities, each a positive multiple of
/// 2^-b, summing to one.
pub fn random_source<R: Rng>(rng: &mut R, n: usize, b: u32) -> SourceSpec {
    let total = 1u64 << b;
    assert!(total >= n as u64, "2^b must be at least n");
    // composition of 2^b into n positive parts
    let mut parts = vec![1u64; n];
    let mut remaining = total - n as u64;
    for j in 0..n {
        let add = if j + 1 == n {
            remaining
        } else {
            rng.gen_range(0..=remaining)
        };
        parts[j] += add;
        remaining -= add;
    }
    let probs = parts
        .into_iter()
        .map(|p| Rational::new(BigInt::from(p), BigInt::from(total)))
        .collect();
    SourceSpec::new(probs, b).expect("generated source satisfies the invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_objects_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let fams = random_families(&mut rng, 3, 4);
            assert_eq!(fams.m(), 3);
            let src = random_source(&mut rng, 4, 5);
            let total: Rational = src.probabilities().iter().cloned().sum();
            assert!(total.is_one());
            let chain = random_chain(&mut rng, 2);
            let _ = crate::chain::cost(&chain);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = random_families(&mut ChaCha8Rng::seed_from_u64(7), 2, 3);
        let b = random_families(&mut ChaCha8Rng::seed_from_u64(7), 2, 3);
        assert_eq!(a, b);
    }
}
