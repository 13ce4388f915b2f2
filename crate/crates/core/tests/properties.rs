use concurrent_rl::tabular::{
    certificate_with, FiniteConcurrentMdp, Operator, SpilloverMode, CONTRACTION_TOLERANCE,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concurrent_operator_respects_bound(
        n_states in 1usize..7,
        n_actions in 1usize..4,
        gamma in 0.0f64..0.999,
        latency in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = FiniteConcurrentMdp::random(n_states, n_actions, vec![latency], gamma, SpilloverMode::Fixed, &mut rng).unwrap();
        let rep = certificate_with(&mdp, 20, &mut rng, Operator::Concurrent).unwrap();
        prop_assert!((rep.bound - gamma.powf(latency)).abs() < 1e-12);
        prop_assert!(rep.max_observed_modulus <= rep.bound + CONTRACTION_TOLERANCE);
    }
}
