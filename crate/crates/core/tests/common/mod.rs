#![allow(dead_code)]

use constellation::geometry::{EmbeddingSet, PairedConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_pair(n: usize, d: usize, seed: u64) -> PairedConfig {
    PairedConfig::random(n, d, &mut rng(seed))
}

/// Random pairs with `n` in `ns` and `d` in `ds`.
pub fn pairs(ns: std::ops::RangeInclusive<usize>, ds: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = PairedConfig> {
    (ns, ds, any::<u64>()).prop_map(|(n, d, seed)| random_pair(n, d, seed))
}

/// Interior points of the feasible region, kept away from its boundary.
pub fn feasible_params() -> impl Strategy<Value = (f64, f64)> {
    (-0.8f64..0.8, 0.05f64..0.95).prop_map(|(b, frac)| {
        let m_max = (1.0 - b).min((1.0 + b) / 3.0);
        (frac * m_max, b)
    })
}

/// Rows of `set` with independent Gaussian noise of scale `sigma`, renormalized.
pub fn perturb(set: &EmbeddingSet, sigma: f64, rng: &mut impl Rng) -> EmbeddingSet {
    let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
    let data: Vec<f64> = set.as_slice().iter().map(|x| x + rng.sample(normal)).collect();
    EmbeddingSet::new(set.dim(), data).unwrap()
}

/// Textbook softplus, split at zero.
pub fn naive_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
