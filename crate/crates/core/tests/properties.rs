use proptest::prelude::*;
use rand::Rng;

use e3cs::metrics::{expected_increment, hindsight_optimal, regret_bound};
use e3cs::rng::{stream, Domain};
use e3cs::sampling::sample_exact_marginal;
use e3cs::selection::{estimate, prob_alloc_log, solve_alpha, tuned_eta, FairnessSchedule};

/// (k, sigma, log-weights) with 1 <= k <= K <= 40 and sigma in [0, k/K].
fn instance() -> impl Strategy<Value = (usize, f64, Vec<f64>)> {
    (1usize..=40)
        .prop_flat_map(|n| (1..=n, 0.0..=1.0f64, prop::collection::vec(-30.0..30.0f64, n)))
        .prop_map(|(k, s, lw)| {
            let sigma = s * k as f64 / lw.len() as f64;
            (k, sigma, lw)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn allocation_is_feasible((k, sigma, lw) in instance()) {
        let a = prob_alloc_log(k, sigma, &lw).unwrap();
        let total: f64 = a.probs.iter().sum();
        prop_assert!((total - k as f64).abs() < 1e-9);
        for &p in &a.probs {
            prop_assert!(p >= sigma - 1e-12 && p <= 1.0);
        }
    }

    #[test]
    fn probability_one_exactly_for_capped((k, sigma, lw) in instance()) {
        let a = prob_alloc_log(k, sigma, &lw).unwrap();
        for (i, &p) in a.probs.iter().enumerate() {
            if a.overflow.contains(&i) {
                prop_assert_eq!(p, 1.0);
            } else if k < lw.len() {
                // With k = K everyone is selected and p = 1 without capping.
                prop_assert!(p < 1.0, "client {} p {}", i, p);
            }
        }
    }

    #[test]
    fn heavier_weight_never_lowers_probability((k, sigma, lw) in instance(), who in any::<prop::sample::Index>(), bump in 0.0..5.0f64) {
        let i = who.index(lw.len());
        let before = prob_alloc_log(k, sigma, &lw).unwrap();
        let mut raised = lw.clone();
        raised[i] += bump;
        let after = prob_alloc_log(k, sigma, &raised).unwrap();
        prop_assert!(after.probs[i] >= before.probs[i] - 1e-12);
        for j in (0..lw.len()).filter(|&j| j != i) {
            prop_assert!(after.probs[j] <= before.probs[j] + 1e-12);
        }
    }

    #[test]
    fn order_of_weights_is_preserved((k, sigma, lw) in instance()) {
        let a = prob_alloc_log(k, sigma, &lw).unwrap();
        for i in 0..lw.len() {
            for j in 0..lw.len() {
                if lw[i] > lw[j] {
                    prop_assert!(a.probs[i] >= a.probs[j]);
                }
            }
        }
    }

    #[test]
    fn oracle_dominates_every_feasible_allocation((k, sigma, lw) in instance(), bits in any::<u64>()) {
        let x: Vec<bool> = (0..lw.len()).map(|i| bits >> i & 1 == 1).collect();
        let best = hindsight_optimal(&x, k, sigma).unwrap();
        let total: f64 = best.iter().sum();
        prop_assert!((total - k as f64).abs() < 1e-9);
        let other = prob_alloc_log(k, sigma, &lw).unwrap();
        prop_assert!(expected_increment(&best, &x) >= expected_increment(&other.probs, &x) - 1e-9);
    }
}

#[test]
fn cap_threshold_exists_for_every_valid_input() {
    let mut rng = stream(41, Domain::Oracle, 0, 0);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=60usize);
        let k = rng.random_range(1..=n);
        let sigma = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) * k as f64 / n as f64 };
        let spread = [1.0, 30.0, 300.0][rng.random_range(0..3)];
        let lw: Vec<f64> = (0..n).map(|_| rng.random_range(-spread..spread)).collect();
        let a = prob_alloc_log(k, sigma, &lw).unwrap_or_else(|e| panic!("n={n} k={k} sigma={sigma}: {e}"));
        assert!((a.probs.iter().sum::<f64>() - k as f64).abs() < 1e-9);
        if spread == 1.0 {
            let w: Vec<f64> = lw.iter().map(|v| v.exp()).collect();
            solve_alpha(&w, k, sigma).unwrap();
        }
    }
}

#[test]
fn estimator_is_unbiased_under_exact_marginals() {
    let probs = [1.0, 0.8, 0.45, 0.3, 0.2, 0.15, 0.1];
    let outcomes = [true, true, false, true, true, false, true];
    let draws = 200_000;
    let mut rng = stream(42, Domain::Selection, 0, 0);
    let mut sums = [0.0; 7];
    for _ in 0..draws {
        let set = sample_exact_marginal(&probs, 3, &mut rng).unwrap();
        for i in 0..probs.len() {
            sums[i] += estimate(outcomes[i], probs[i], set.contains(i)).unwrap();
        }
    }
    for i in 0..probs.len() {
        let mean = sums[i] / draws as f64;
        let x = outcomes[i] as u8 as f64;
        // Var(x_hat) = x (1 - p) / p.
        let se = (x * (1.0 - probs[i]) / probs[i] / draws as f64).sqrt();
        assert!((mean - x).abs() <= 4.0 * se + 1e-12, "client {i}: mean {mean}, outcome {x}");
    }
}

#[test]
fn tuned_rate_minimises_the_bound() {
    let (k, clients, rounds) = (20, 100, 2500);
    for factor in [0.0, 0.3, 0.9] {
        let schedule = FairnessSchedule::scaled(factor, k, clients);
        let eta = tuned_eta(k, clients, &schedule, rounds).unwrap();
        let at = |e: f64| regret_bound(rounds, clients, k, &schedule, Some(e)).unwrap();
        let best = at(eta);
        assert!((best - regret_bound(rounds, clients, k, &schedule, None).unwrap()).abs() < 1e-9 * best);
        for step in 1..1000 {
            let e = step as f64 / 1000.0;
            assert!(at(e) >= best - 1e-9 * best, "factor {factor}: eta {e} beats tuned {eta}");
        }
    }
}
