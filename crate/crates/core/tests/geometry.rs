mod common;

use common::*;
use constellation::constructions::build_constellation;
use constellation::geometry::*;
use proptest::prelude::*;

#[test]
fn xi_arithmetic_from_reported_moments() {
    let xi = xi_from_moments(1.8100, 1.2221);
    assert!((xi - 0.5879).abs() < 1e-12);
    assert!((xi - 0.5880).abs() < 2e-4);
}

#[test]
fn constant_offset_has_zero_xi() {
    let u = EmbeddingSet::from_rows(&vec![vec![1.0, 0.0, 0.0]; 4]).unwrap();
    let v = EmbeddingSet::from_rows(&vec![vec![0.0, 1.0, 0.0]; 4]).unwrap();
    let r = xi_report(&PairedConfig::new(u, v).unwrap(), 0).unwrap();
    assert!(r.xi.abs() < 1e-15);
    assert!((r.mean_of_norms - 2.0).abs() < 1e-15);
}

#[test]
fn validation_is_exact_on_constructions() {
    let (pair, p) = build_constellation(12, 0.1, 0.0, 8, 0).unwrap();
    assert!(validate_constellation(&pair, p, 1e-9).unwrap().passed);
    let stricter = ConstellationParams::new(p.margin + 1e-6, p.rel_bias).unwrap();
    let report = validate_constellation(&pair, stricter, 1e-9).unwrap();
    assert!(!report.passed);
    assert!(report.violations.iter().any(|v| matches!(v.constraint, Constraint::Positive(_))));
    assert!(report.min_slack < 0.0 && report.min_slack > -2e-6);
}

proptest! {
    #[test]
    fn gram_stats_match_brute_force(pair in pairs(2..=12, 1..=6)) {
        let s = gram_stats(&pair);
        let n = pair.count();
        let pos: Vec<f64> = (0..n).map(|i| pair.inner(i, i)).collect();
        let neg: Vec<f64> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| pair.inner(i, j)).collect();
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(s.min_pos, min(&pos));
        prop_assert_eq!(s.max_pos, max(&pos));
        prop_assert_eq!(s.min_neg, Some(min(&neg)));
        prop_assert_eq!(s.max_neg, Some(max(&neg)));
        let mean_neg = neg.iter().sum::<f64>() / neg.len() as f64;
        prop_assert!((s.mean_neg.unwrap() - mean_neg).abs() < 1e-14);
        prop_assert_eq!(s.separated, min(&pos) >= max(&neg));
        let (m, b) = (s.opt_margin.unwrap(), s.opt_rel_bias.unwrap());
        prop_assert!((b + m - min(&pos)).abs() < 1e-15 && (b - m - max(&neg)).abs() < 1e-15);
    }

    #[test]
    fn untrimmed_stats_are_the_extremes(pair in pairs(2..=10, 1..=5)) {
        prop_assert_eq!(trimmed_stats(&pair, 0.0, 0.0).unwrap(), gram_stats(&pair));
    }

    #[test]
    fn trimming_only_loosens(pair in pairs(3..=10, 1..=5), q in 0.0f64..0.49) {
        let t = trimmed_stats(&pair, q, q).unwrap();
        let s = gram_stats(&pair);
        prop_assert!(t.min_pos >= s.min_pos && t.max_neg.unwrap() <= s.max_neg.unwrap());
    }

    #[test]
    fn renormalize_is_idempotent(n in 1usize..10, d in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let raw: Vec<f64> = (0..n * d).map(|_| rand::Rng::random_range(&mut r, -2.0..2.0)).collect();
        if let Ok(once) = EmbeddingSet::new(d, raw) {
            prop_assert!(once.max_norm_deviation() < 1e-15);
            let twice = renormalize(&once).unwrap();
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn xi_identities(pair in pairs(2..=12, 1..=8), seed in any::<u64>()) {
        let r = xi_report(&pair, seed).unwrap();
        prop_assert!((r.xi - (r.mean_of_norms - r.norm_of_mean)).abs() < 1e-9);
        prop_assert!((r.xi - r.deviation).abs() < 1e-9);
        prop_assert!(r.xi >= -1e-12);
        // Every deviation is bounded by the total.
        let n = pair.count();
        let d = pair.dim();
        let x: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|c| pair.u.row(i)[c] - pair.v.row(i)[c]).collect()).collect();
        let mean: Vec<f64> = (0..d).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
        let worst = x.iter().map(|r| r.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)).sum::<f64>()).fold(0.0, f64::max);
        prop_assert!(worst <= n as f64 * r.xi + 1e-9);
    }

    #[test]
    fn xi_is_permutation_invariant(pair in pairs(2..=10, 1..=6), seed in any::<u64>()) {
        let n = pair.count();
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng(seed));
        let permuted = PairedConfig::new(pair.u.select(&order), pair.v.select(&order)).unwrap();
        let a = xi_report(&pair, 0).unwrap().xi;
        let b = xi_report(&permuted, 0).unwrap().xi;
        prop_assert!((a - b).abs() < 1e-12);
    }
}
