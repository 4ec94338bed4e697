mod common;

use common::*;
use constellation::constructions::*;
use constellation::geometry::{gram_stats, PairedConfig};
use constellation::retrieval::*;
use constellation::Error;
use proptest::prelude::*;

fn brute_force(pair: &PairedConfig, direction: Direction) -> Vec<usize> {
    let n = pair.count();
    let score = |i: usize, j: usize| match direction {
        Direction::UToV => pair.inner(i, j),
        Direction::VToU => pair.inner(j, i),
    };
    (0..n).filter(|&i| (0..n).any(|j| score(i, j) > score(i, i))).collect()
}

#[test]
fn exact_constellations_at_high_temperature() {
    let (pair, p) = build_constellation(12, 0.1, 0.0, 100, 0).unwrap();
    let r = robustness_check(&pair, 400.0, 400.0 * p.rel_bias, 20).unwrap();
    assert!(r.bound_fraction > 1.0 - 1e-9);
    assert_eq!(r.actual_fraction, 1.0);
    assert!(r.holds);
}

#[test]
fn swapped_partners_lower_both_sides() {
    let (pair, p) = build_constellation(12, 0.1, 0.0, 100, 0).unwrap();
    let mut order: Vec<usize> = (0..100).collect();
    order.swap(0, 1);
    let swapped = PairedConfig::new(pair.u.clone(), pair.v.select(&order)).unwrap();
    let r = robustness_check(&swapped, 50.0, 50.0 * p.rel_bias, 20).unwrap();
    assert!(r.actual_fraction < 1.0);
    assert!(r.bound_fraction < 1.0);
    assert!(r.holds, "{r:?}");
}

#[test]
fn batch_range_is_enforced() {
    let pair = random_pair(16, 4, 0);
    for batch in [2, 4, 16, 17] {
        assert!(matches!(robustness_check(&pair, 5.0, 0.0, batch), Err(Error::InvalidBatch { .. })));
    }
    assert!(robustness_check(&pair, 5.0, 0.0, 5).is_ok());
}

#[test]
fn multimodal_edges_retrieve_perfectly() {
    let code = greedy_spherical_code(6, 0.5, 30, 1, 100_000).unwrap();
    let (mm, _) = multimodal_constellation(&code, 4, 0.8).unwrap();
    for (a, b) in SynchronizationGraph::complete(4).edges() {
        let pair = mm.pair(*a, *b).unwrap();
        for dir in [Direction::UToV, Direction::VToU] {
            let r = nn_retrieve(&pair, dir);
            assert!(r.success_fraction == 1.0 && r.unique);
        }
    }
}

#[test]
fn retrieval_degrades_with_noise() {
    let sigmas = [0.01, 0.05, 0.1, 0.2];
    let mut medians = Vec::new();
    for &sigma in &sigmas {
        let mut fractions: Vec<f64> = (0..50)
            .map(|seed| {
                let (pair, _) = build_constellation(12, 0.1, 0.0, 60, seed).unwrap();
                let mut r = rng(seed);
                let noisy = PairedConfig::new(perturb(&pair.u, sigma, &mut r), perturb(&pair.v, sigma, &mut r)).unwrap();
                nn_retrieve(&noisy, Direction::UToV).success_fraction
            })
            .collect();
        fractions.sort_by(f64::total_cmp);
        medians.push((fractions[24] + fractions[25]) / 2.0);
    }
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}

proptest! {
    #[test]
    fn matches_brute_force(pair in pairs(1..=50, 1..=8)) {
        for dir in [Direction::UToV, Direction::VToU] {
            let r = nn_retrieve(&pair, dir);
            let expected = brute_force(&pair, dir);
            prop_assert_eq!(&r.failures, &expected);
            prop_assert_eq!(r.success_fraction, 1.0 - expected.len() as f64 / pair.count() as f64);
        }
    }

    #[test]
    fn constructions_retrieve_perfectly((m, b) in feasible_params(), n in 2usize..40, seed in any::<u64>()) {
        let built = build_constellation(12, m, b, n, seed);
        prop_assume!(built.is_ok());
        let (pair, _) = built.unwrap();
        for dir in [Direction::UToV, Direction::VToU] {
            let r = nn_retrieve(&pair, dir);
            prop_assert!(r.success_fraction == 1.0 && r.unique);
        }
    }
}

/// Interior points whose code parameter leaves room for 60 points in `R^10`.
fn moderate_params() -> impl Strategy<Value = (f64, f64)> {
    (-0.5f64..0.5, 0.05f64..0.6).prop_map(|(b, frac)| (frac * (1.0 + b) / 3.0, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn robustness_bound_holds_under_perturbation(
        (m, b) in moderate_params(),
        sigma in prop::sample::select(vec![0.01, 0.05, 0.1, 0.2, 0.4]),
        t in 5.0f64..100.0,
        n in 20usize..=60,
        bsel in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let built = build_constellation(12, m, b, n, seed);
        prop_assume!(built.is_ok());
        let (pair, _) = built.unwrap();
        let mut r = rng(seed);
        let noisy = PairedConfig::new(perturb(&pair.u, sigma, &mut r), perturb(&pair.v, sigma, &mut r)).unwrap();
        let lo = (n as f64).sqrt().floor() as usize + 1;
        let batch = lo + (bsel as usize) % (n - lo);
        let b_rel = gram_stats(&noisy).opt_rel_bias.unwrap();
        let report = robustness_check(&noisy, t, b_rel * t, batch).unwrap();
        prop_assert!(report.holds, "{:?}", report);
        prop_assert!(report.xi_loss >= 0.0 && (0.0..=1.0).contains(&report.bound_fraction));
    }
}
