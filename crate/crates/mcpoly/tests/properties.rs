//! Randomized invariant checks. Strategies draw a seed and build structured
//! inputs through the deterministic generators in `mcpoly::gen`.

use mcpoly::aifv::{
    decode_exact, default_height_cap, encode, enumerate_trees, has_hard_violation, huffman,
    tree_stats, validate,
};
use mcpoly::chain::{cost, PointX, StateFamilies};
use mcpoly::gen::{random_chain, random_families, random_source};
use mcpoly::numerics::{rat, rational_to_f64, Rational};
use mcpoly::polytope::{envelope, restrict_family, Restriction};
use mcpoly::solvers::{iterate, solve, Method, SolveOptions};
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_x(rng: &mut ChaCha8Rng, m: usize) -> PointX {
    PointX((1..m).map(|_| rat(rng.gen_range(-40..40), 8)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The pi-weighted sum of a chain's planes collapses to the cost no
    /// matter where it is evaluated.
    #[test]
    fn weighted_identity_ignores_x(seed: u64, m in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, m);
        let c = cost(&chain);
        for _ in 0..4 {
            let x = random_x(&mut rng, m);
            prop_assert_eq!(mcpoly::chain::weighted_plane_identity(&chain, &x), c.clone());
        }
    }

    /// Removing states can only raise per-type envelopes.
    #[test]
    fn restriction_raises_envelopes(seed: u64, m in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fams = random_families(&mut rng, m, 4);
        let keep: Vec<usize> = (1..m).filter(|_| rng.gen_bool(0.5)).collect();
        let p = Restriction::new(keep);
        let restricted = restrict_family(&fams, &p);
        let x = random_x(&mut rng, m);
        let full = envelope(&fams, &x, &Restriction::full(m)).unwrap();
        for k in p.indices() {
            if restricted.family(k).is_empty() {
                continue;
            }
            let g: Rational = restricted.family(k)
                .iter()
                .map(|s| mcpoly::chain::f(k, &x, s))
                .min()
                .unwrap();
            prop_assert!(&g >= full.g(k), "restriction lowered g_{}", k);
        }
    }

    /// The optimal cost dominates the envelope height everywhere.
    #[test]
    fn optimum_dominates_envelope(seed: u64, m in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fams = random_families(&mut rng, m, 3);
        let best = solve(&fams, Method::BruteForce, &SolveOptions::default()).unwrap();
        for _ in 0..5 {
            let x = random_x(&mut rng, m);
            let env = envelope(&fams, &x, &Restriction::full(m)).unwrap();
            prop_assert!(env.h <= best.cost, "h({:?}) = {} above optimum {}", x, env.h, best.cost);
        }
    }

    /// The fixed-point iteration lands on the same cost from any start.
    #[test]
    fn iterate_start_invariant(seed: u64, m in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fams = random_families(&mut rng, m, 3);
        let opts = SolveOptions::default();
        let from_origin = iterate(&fams, PointX::origin(m), &opts).unwrap();
        let from_random = iterate(&fams, random_x(&mut rng, m), &opts).unwrap();
        prop_assert_eq!(from_origin.cost, from_random.cost);
    }

    /// Encode/decode round-trips with exact symbol counts.
    #[test]
    fn codec_round_trip(seed: u64, m in 2usize..4, n in 3usize..5, len in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_source(&mut rng, n, 4);
        let fams = mcpoly::aifv::families_from_source(&src, m, default_height_cap(n, m)).unwrap();
        let report = solve(&fams, Method::Iterate, &SolveOptions::default()).unwrap();
        let code = mcpoly::aifv::code_from_chain(&report.chain).unwrap();
        let msg: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n)).collect();
        let bits = encode(&code, &msg, n).unwrap();
        let out = decode_exact(&code, &bits, msg.len()).unwrap();
        prop_assert_eq!(out.symbols, msg);
        prop_assert!(out.max_delay <= m);
    }

    /// Every enumerated tree is structurally valid with stochastic
    /// transitions, a positive return probability, and bounded height.
    #[test]
    fn enumerated_trees_are_valid(seed: u64, m in 2usize..4, k_pick: u8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=4usize);
        let src = random_source(&mut rng, n, 4);
        let cap = default_height_cap(n, m);
        let k = (k_pick as usize) % m;
        let trees = enumerate_trees(m, k, &src, cap).unwrap();
        prop_assert!(!trees.is_empty());
        for t in trees.iter().take(40) {
            let violations = validate(t, m, n);
            prop_assert!(!has_hard_violation(&violations), "{:?}", violations);
            prop_assert!(violations.is_empty(), "non-normalized tree {:?}", violations);
            let stats = tree_stats(t, &src, m);
            let total: Rational = stats.transitions.iter().sum();
            prop_assert_eq!(total, Rational::one());
            prop_assert!(stats.transitions[0] > Rational::zero());
            prop_assert!(t.root.height() <= cap);
        }
    }

    /// Huffman never beats the entropy and generated families validate.
    #[test]
    fn generated_instances_are_well_formed(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=6usize);
        let src = random_source(&mut rng, n, 5);
        let (_, huff) = huffman(&src);
        prop_assert!(rational_to_f64(&huff) + 1e-9 >= src.entropy());
        let m = rng.gen_range(2..=4usize);
        let fams = random_families(&mut rng, m, 4);
        prop_assert!(StateFamilies::new(fams.families().to_vec()).is_ok());
    }
}
