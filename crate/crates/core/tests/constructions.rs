mod common;

use common::*;
use constellation::bounds::classify_region;
use constellation::constructions::*;
use constellation::geometry::*;
use constellation::losses::rb_sigmoid_loss;
use constellation::ConstellationParams;
use proptest::prelude::*;

fn gram(pair: &PairedConfig) -> Vec<f64> {
    pair.cross_gram()
}

fn lifted_params(p: ConstellationParams, delta: f64, phi: f64) -> (f64, f64) {
    let d2 = delta * delta;
    let tail = 1.0 - d2 - phi * phi;
    (d2 * p.margin, d2 * p.rel_bias + phi * phi - tail)
}

#[test]
fn recipe_hand_values() {
    let r = constellation_recipe(0.1, 0.0).unwrap();
    assert!((r.alpha - 0.7 / 1.1).abs() < 1e-15);
    assert!((r.alpha - 0.636364).abs() < 1e-6);
    assert!((r.delta_sq - 0.55).abs() < 1e-15);
    assert!(r.phi_sq.abs() < 1e-15);
    let (pair, p) = build_constellation(12, 0.1, 0.0, 8, 0).unwrap();
    assert!(validate_constellation(&pair, p, 1e-9).unwrap().passed);
}

#[test]
fn simplex_vertices() {
    for k in 2..9 {
        let s = simplex(k, None).unwrap();
        for i in 0..k {
            for j in 0..k {
                let expected = if i == j { 1.0 } else { -1.0 / (k - 1) as f64 };
                assert!((dot(s.row(i), s.row(j)) - expected).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn tightness_configurations_have_the_sign_pattern() {
    for (d, n) in [(3, 6), (4, 8), (5, 7), (6, 12)] {
        let pair = tightness_config_auto(d, n, 1).unwrap();
        assert!(strict_sign_pattern(&pair, 1e-10), "d = {d}, n = {n}");
    }
}

proptest! {
    #[test]
    fn lifts_compose((m, b) in feasible_params(), d1 in 0.3f64..0.95, f1 in 0.0f64..0.3, d2 in 0.3f64..0.95, f2 in 0.0f64..0.3, seed in any::<u64>()) {
        prop_assume!(d1 * d1 + f1 * f1 < 1.0 && d2 * d2 + f2 * f2 < 1.0);
        let (pair, p) = build_constellation(6, m, b, 6, seed).unwrap();
        let (once, p1) = lift_constellation(&pair, p, LiftParams::new(d1, f1).unwrap()).unwrap();
        let (twice, p2) = lift_constellation(&once, p1, LiftParams::new(d2, f2).unwrap()).unwrap();
        let (m1, b1) = lifted_params(p, d1, f1);
        let (m2, b2) = lifted_params(ConstellationParams { margin: m1, rel_bias: b1 }, d2, f2);
        prop_assert!((p2.margin - m2).abs() < 1e-14 && (p2.rel_bias - b2).abs() < 1e-14);
        prop_assert!(validate_constellation(&twice, p2, 1e-9).unwrap().passed);
        prop_assert_eq!(twice.dim(), pair.dim() + 4);
        // every inner product transforms affinely through both lifts
        let (g0, g2) = (gram(&pair), gram(&twice));
        let step = |s: f64, d: f64, f: f64| d * d * s + f * f - (1.0 - d * d - f * f);
        for (a, b) in g0.iter().zip(&g2) {
            prop_assert!((step(step(*a, d1, f1), d2, f2) - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_modality_simplex_is_a_lift(alpha in 0.05f64..0.9, delta in 0.2f64..0.99, seed in any::<u64>()) {
        let code = greedy_spherical_code(5, alpha, 6, seed, 10_000).unwrap();
        let (mm, pm) = multimodal_constellation(&code, 2, delta).unwrap();
        let (pair, p) = code_as_constellation(&code);
        let (lifted, pl) = lift_constellation(&pair, p, LiftParams::new(delta, 0.0).unwrap()).unwrap();
        prop_assert!((pm.margin - pl.margin).abs() < 1e-14);
        prop_assert!((pm.rel_bias - pl.rel_bias).abs() < 1e-14);
        let (a, b) = (gram(&mm.pair(0, 1).unwrap()), gram(&lifted));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn multimodal_edges_are_constellations(alpha in 0.05f64..0.9, delta in 0.5f64..0.99, k in 2usize..6, seed in any::<u64>()) {
        let code = greedy_spherical_code(5, alpha, 6, seed, 10_000).unwrap();
        let (mm, p) = multimodal_constellation(&code, k, delta).unwrap();
        for (a, c) in SynchronizationGraph::complete(k).edges() {
            let pair = mm.pair(*a, *c).unwrap();
            prop_assert!(validate_constellation(&pair, p, 1e-9).unwrap().passed);
        }
    }

    #[test]
    fn greedy_codes_certify(d in 2usize..8, alpha in -0.2f64..0.9, n in 2usize..12, seed in any::<u64>()) {
        match greedy_spherical_code(d, alpha, n, seed, 2_000) {
            Ok(code) => {
                prop_assert_eq!(code.points.count(), n);
                prop_assert!(code.max_inner_product() <= alpha + 1e-12);
            }
            Err(constellation::Error::TargetUnreachable { accepted, partial, dim, .. }) => {
                prop_assert!(accepted < n);
                prop_assert_eq!(partial.len(), accepted * dim);
            }
            Err(e) => prop_assert!(false, "unexpected error {}", e),
        }
    }

    #[test]
    fn interior_points_are_constructible((m, b) in feasible_params(), seed in any::<u64>()) {
        prop_assume!(classify_region(m, b).exponential_exists);
        let (pair, p) = build_constellation(20, m, b, 8, seed).unwrap();
        prop_assert!(validate_constellation(&pair, p, 1e-9).unwrap().passed);
        let stats = gram_stats(&pair);
        prop_assert!((stats.min_pos - (m + b)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn locked_adapter_identity(pair in pairs(2..=10, 2..=6), delta in 0.05f64..1.0, t in 0.1f64..50.0, b_rel in -1.0f64..1.0) {
        let adapted = apply_locked_adapters(&pair, delta).unwrap();
        let (t_eff, b_eff) = adapter_identity_params(delta, t, b_rel, None).unwrap();
        let lhs = rb_sigmoid_loss(&adapted, t, b_rel).unwrap();
        let rhs = rb_sigmoid_loss(&pair, t_eff, b_eff).unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-10), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn simplex_adapter_identity(n in 2usize..8, d in 2usize..6, ksel in 0usize..3, delta in 0.05f64..1.0, t in 0.1f64..50.0, b_rel in -1.0f64..1.0, seed in any::<u64>()) {
        let k = [3, 4, 8][ksel];
        let raw = MultiModalConfig::random(k, n, d, &mut rng(seed)).unwrap();
        let w = simplex(k, None).unwrap();
        let adapted: Vec<EmbeddingSet> = (0..k).map(|j| apply_modality_adapter(raw.set(j), delta, w.row(j)).unwrap()).collect();
        let adapted = MultiModalConfig::new(adapted).unwrap();
        let (t_eff, b_eff) = adapter_identity_params(delta, t, b_rel, Some(k)).unwrap();
        for (a, c) in SynchronizationGraph::complete(k).edges() {
            let lhs = rb_sigmoid_loss(&adapted.pair(*a, *c).unwrap(), t, b_rel).unwrap();
            let rhs = rb_sigmoid_loss(&raw.pair(*a, *c).unwrap(), t_eff, b_eff).unwrap();
            prop_assert!(rel_close(lhs, rhs, 1e-10), "k = {}: {} vs {}", k, lhs, rhs);
        }
    }
}
