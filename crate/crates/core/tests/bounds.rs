mod common;

use common::*;
use constellation::bounds::*;
use constellation::constructions::build_constellation;
use constellation::geometry::{gram_stats, validate_constellation, EmbeddingSet, PairedConfig};
use constellation::ConstellationParams;
use proptest::prelude::*;

#[test]
fn exponents_at_hand_points() {
    // alpha = 7/11, so 1 - alpha^2 = 72/121 and 1 - alpha = 4/11
    assert!((lower_exponent(0.1, 0.0).unwrap() - 0.5 * (121.0f64 / 72.0).ln()).abs() < 1e-15);
    assert!((upper_exponent(0.1, 0.0).unwrap() - 0.5 * 2.75f64.ln()).abs() < 1e-15);
    assert!((upper_exponent(0.1, 0.0).unwrap() - 0.50580).abs() < 5e-6);
    assert!((lower_exponent(0.25, 0.0).unwrap() - 0.020411).abs() < 5e-7);
    assert!((nats_to_bits(lower_exponent(0.1, 0.0).unwrap()) - 0.5 * (121.0f64 / 72.0).log2()).abs() < 1e-15);
    assert_eq!(upper_exponent(1.0 / 3.0, 0.0).unwrap(), 0.0);
    assert!(lower_exponent(0.0, 0.5).is_err());
    assert!(lower_exponent(1.0 / 3.0, 0.0).is_err());
}

#[test]
fn region_examples() {
    let all = |m, b| {
        let r = classify_region(m, b);
        (r.feasible, r.exponential_exists, r.modality_gap_guaranteed)
    };
    assert_eq!(all(0.2, 0.0), (true, true, true));
    assert_eq!(all(0.5, 0.6), (false, false, false));
    assert_eq!(all(0.05, 0.9), (true, true, false));
    assert_eq!(all(0.5, 0.5), (true, false, false));
    assert_eq!(all(0.6, 0.2), (false, false, false));
    assert_eq!(all(0.3, -0.5), (false, false, false));
}

#[test]
fn averaged_gram_examples() {
    let n = 6;
    let e = EmbeddingSet::standard_basis(n, n);
    let (lhs, rhs, ok) = averaged_gram_inequality_check(&PairedConfig::new(e.clone(), e).unwrap());
    assert!(ok && lhs == 0.0 && (rhs + 1.0 / n as f64).abs() < 1e-15);

    let u = EmbeddingSet::from_rows(&vec![vec![1.0, 0.0]; n]).unwrap();
    let v = EmbeddingSet::from_rows(&vec![vec![-1.0, 0.0]; n]).unwrap();
    let (lhs, rhs, ok) = averaged_gram_inequality_check(&PairedConfig::new(u, v).unwrap());
    let nf = n as f64;
    assert!(ok);
    assert!((lhs + (nf - 1.0) / nf).abs() < 1e-15);
    assert!((rhs + (nf - 2.0) / (2.0 * nf) + 0.5).abs() < 1e-15);
}

#[test]
fn exponents_are_ordered_on_the_zero_bias_slice() {
    for i in 0..30 {
        let m = 0.01 + (0.3 - 0.01) * i as f64 / 29.0;
        let b = exponent_bounds(m, 0.0).unwrap();
        assert!(b.lower_nats >= 0.0 && b.lower_nats <= b.upper_nats, "m = {m}: {b:?}");
    }
}

#[test]
fn interior_points_are_witnessed() {
    let mut r = rng(11);
    let mut witnessed = 0;
    while witnessed < 50 {
        let b: f64 = rand::Rng::random_range(&mut r, -0.9..0.9);
        let m: f64 = rand::Rng::random_range(&mut r, 0.0..1.0);
        if !classify_region(m, b).exponential_exists {
            continue;
        }
        let (pair, p) = build_constellation(20, m, b, 8, witnessed).unwrap();
        assert!(validate_constellation(&pair, p, 1e-9).unwrap().passed);
        witnessed += 1;
    }
}

proptest! {
    #[test]
    fn dual_form_of_the_upper_exponent((m, b) in feasible_params()) {
        let direct = -0.5 * (4.0 * m / (1.0 + b + m)).ln();
        prop_assert!((upper_exponent(m, b).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn exponents_are_nonnegative_inside((m, b) in feasible_params()) {
        let e = exponent_bounds(m, b).unwrap();
        prop_assert!(e.lower_nats >= 0.0 && e.upper_nats >= 0.0);
        prop_assert!(e.alpha_star > 0.0 && e.alpha_star < 1.0);
        prop_assert!((bits_to_nats(nats_to_bits(e.lower_nats)) - e.lower_nats).abs() < 1e-15);
    }

    #[test]
    fn region_labels_nest(m in -0.1f64..1.1, b in -1.1f64..1.1) {
        let r = classify_region(m, b);
        prop_assert!(!r.modality_gap_guaranteed || r.exponential_exists);
        prop_assert!(!r.exponential_exists || r.feasible);
        prop_assert_eq!(r.feasible, m >= 0.0 && b.abs() <= 1.0 && m + b <= 1.0 && 3.0 * m <= 1.0 + b);
    }

    #[test]
    fn realized_margins_satisfy_the_finite_size_constraints(pair in pairs(2..=8, 1..=4)) {
        // Every separated configuration is a constellation at its own optimal parameters.
        if let Some(p) = gram_stats(&pair).optimal_params() {
            let (ok, violated) = margin_feasibility(p.margin, p.rel_bias, Some(pair.count()));
            prop_assert!(ok, "{:?} at {:?}", violated, p);
        }
    }

    #[test]
    fn infeasible_params_admit_no_configuration(pair in pairs(2..=8, 1..=6), m in 0.0f64..1.0, b in -1.0f64..1.0) {
        prop_assume!(!classify_region(m, b).feasible && m > 0.0);
        let params = ConstellationParams { margin: m, rel_bias: b };
        prop_assert!(!validate_constellation(&pair, params, 0.0).unwrap().passed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn averaged_gram_inequality_holds(pair in pairs(1..=16, 1..=8)) {
        let (lhs, rhs, ok) = averaged_gram_inequality_check(&pair);
        prop_assert!(ok, "{} < {}", lhs, rhs);
    }

    #[test]
    fn averaged_gram_inequality_holds_near_constellations((m, b) in feasible_params(), seed in any::<u64>()) {
        let (pair, _) = build_constellation(6, m, b, 6, seed).unwrap();
        let v = perturb(&pair.v, 0.05, &mut rng(seed));
        prop_assert!(averaged_gram_inequality_check(&PairedConfig::new(pair.u, v).unwrap()).2);
    }
}
