mod common;

use dhmm::estimate::permute_states;
use dhmm::likelihood::oracle::brute_force_log_q;
use dhmm::likelihood::{log_likelihood_trace, log_p, log_q, LikelihoodKind};
use dhmm::markov::Distribution;
use dhmm::models::NoiseSchedule;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_instance, rel_err};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_equals_path_sum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 3, 6, None);
        let q = log_q(&inst.model, &inst.theta, &inst.nu, &inst.obs).unwrap();
        let b = brute_force_log_q(&inst.model, &inst.theta, &inst.nu, &inst.obs).unwrap();
        prop_assert!(rel_err(q, b) <= 1e-10, "forward {q} vs path sum {b}");
    }

    #[test]
    fn relabeling_states_leaves_likelihood_unchanged(seed in any::<u64>(), rot in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 3, 30, None);
        let k = inst.model.states();
        let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
        let theta = permute_states(&inst.theta, &perm).unwrap();
        let nu = Distribution::new(perm.iter().map(|&p| inst.nu.weights()[p]).collect()).unwrap();
        for kind in [LikelihoodKind::Quasi, LikelihoodKind::Exact] {
            let a = dhmm::likelihood::log_likelihood(kind, &inst.model, &inst.theta, &inst.nu, &inst.obs).unwrap();
            let b = dhmm::likelihood::log_likelihood(kind, &inst.model, &theta, &nu, &inst.obs).unwrap();
            prop_assert!(rel_err(a, b) <= 1e-12, "{kind:?}: {a} vs {b}");
        }
    }

    /// Changing the initial law moves the log-likelihood by at most the
    /// largest log ratio of the two laws.
    #[test]
    fn initial_law_effect_is_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 3, 40, None);
        let k = inst.model.states();
        let other = Distribution::uniform(k);
        let bound = inst
            .nu
            .weights()
            .iter()
            .zip(other.weights())
            .map(|(a, b)| (a / b).ln().abs())
            .fold(0.0f64, f64::max);
        let a = log_q(&inst.model, &inst.theta, &inst.nu, &inst.obs).unwrap();
        let b = log_q(&inst.model, &inst.theta, &other, &inst.obs).unwrap();
        prop_assert!((a - b).abs() <= bound + 1e-9);
    }

    #[test]
    fn zero_noise_collapses_both_likelihoods(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 3, 40, Some(NoiseSchedule::zero()));
        let q = log_q(&inst.model, &inst.theta, &inst.nu, &inst.obs).unwrap();
        let p = log_p(&inst.model, &inst.theta, &inst.nu, &inst.obs).unwrap();
        prop_assert!(rel_err(p, q) <= 1e-12);
    }

    #[test]
    fn prefix_trace_matches_prefix_evaluations(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 2, 25, None);
        let trace = log_likelihood_trace(LikelihoodKind::Exact, &inst.model, &inst.theta, &inst.nu, &inst.obs).unwrap();
        for t in [1, inst.obs.len() / 2, inst.obs.len()] {
            if t == 0 {
                continue;
            }
            let direct = log_p(&inst.model, &inst.theta, &inst.nu, &inst.obs.prefix(t)).unwrap();
            prop_assert!(rel_err(trace[t - 1], direct) <= 1e-12);
        }
    }
}

#[test]
fn long_sequences_stay_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 3, 1, None);
        let obs = dhmm::simulate::simulate(&inst.model, &inst.theta, Some(&inst.nu), 20_000, 3)
            .unwrap()
            .z;
        let q = log_q(&inst.model, &inst.theta, &inst.nu, &obs).unwrap();
        let p = log_p(&inst.model, &inst.theta, &inst.nu, &obs).unwrap();
        assert!(q.is_finite() && p.is_finite(), "{q} {p}");
        // per-step average well inside the range of a single-step log density
        assert!((q / 20_000.0).abs() < 50.0);
    }
}
