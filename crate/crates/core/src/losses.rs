//! Contrastive losses over paired embeddings.
//!
//! The sigmoid loss is a sum of `N^2` softplus terms: one per positive pair
//! pushing `<U_i, V_i>` above `b / t`, one per negative pair pushing
//! `<U_i, V_j>` below it. All sums are accumulated per row and folded in row
//! order, so parallel and sequential evaluation agree bit for bit.

use nalgebra::DMatrixView;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constructions::{MultiModalConfig, SynchronizationGraph};
use crate::error::{Error, Result};
use crate::geometry::{dot, EmbeddingSet, PairedConfig};
use crate::par;

/// Below this many pairs the row loop runs sequentially.
const PAR_THRESHOLD: usize = 64;

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^{-x})`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How the bias enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Raw bias `b`: terms are `softplus(-t s_ii + b)` and `softplus(t s_ij - b)`.
    Bias,
    /// Relative bias: `b = t * b_rel`.
    #[default]
    RelBias,
}

/// Loss hyperparameters. Only one of `bias` / `rel_bias` is read, depending
/// on `parameterization`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub inv_temp: f64,
    pub bias: f64,
    pub rel_bias: f64,
    pub parameterization: Parameterization,
}

impl LossParams {
    pub fn bias(inv_temp: f64, bias: f64) -> Result<Self> {
        check_temp(inv_temp)?;
        Ok(Self {
            inv_temp,
            bias,
            rel_bias: bias / inv_temp,
            parameterization: Parameterization::Bias,
        })
    }

    pub fn rel_bias(inv_temp: f64, rel_bias: f64) -> Result<Self> {
        check_temp(inv_temp)?;
        Ok(Self {
            inv_temp,
            bias: rel_bias * inv_temp,
            rel_bias,
            parameterization: Parameterization::RelBias,
        })
    }

    /// The raw bias seen by the loss.
    pub fn effective_bias(&self) -> f64 {
        match self.parameterization {
            Parameterization::Bias => self.bias,
            Parameterization::RelBias => self.rel_bias * self.inv_temp,
        }
    }

    pub fn loss(&self, pair: &PairedConfig) -> Result<f64> {
        sigmoid_loss(pair, self.inv_temp, self.effective_bias())
    }
}

fn check_temp(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTemperature(t))
    }
}

fn map_rows<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    if n >= PAR_THRESHOLD {
        par::map_indices(n, f)
    } else {
        (0..n).map(f).collect()
    }
}

/// Per-row positive term and summed negative terms.
fn row_terms(pair: &PairedConfig, t: f64, b: f64) -> Vec<(f64, f64)> {
    let n = pair.count();
    map_rows(n, |i| {
        let ui = pair.u.row(i);
        let mut neg = 0.0;
        let mut pos = 0.0;
        for j in 0..n {
            let s = dot(ui, pair.v.row(j));
            if i == j {
                pos = softplus(-t * s + b);
            } else {
                neg += softplus(t * s - b);
            }
        }
        (pos, neg)
    })
}

/// Sigmoid loss with inverse temperature `t` and bias `b`.
pub fn sigmoid_loss(pair: &PairedConfig, t: f64, b: f64) -> Result<f64> {
    check_temp(t)?;
    let rows = row_terms(pair, t, b);
    let per_row: Vec<f64> = rows.iter().map(|(p, n)| p + n).collect();
    Ok(par::ordered_sum(&per_row))
}

/// Sigmoid loss in the relative-bias parameterization; identical to
/// `sigmoid_loss(pair, t, b_rel * t)`.
pub fn rb_sigmoid_loss(pair: &PairedConfig, t: f64, b_rel: f64) -> Result<f64> {
    sigmoid_loss(pair, t, b_rel * t)
}

/// Loss value together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// `dL/dU`, row-major like the embeddings.
    pub grad_u: Vec<f64>,
    pub grad_v: Vec<f64>,
    /// `dL/dt` with the bias (or relative bias) held fixed.
    pub d_inv_temp: f64,
    /// `dL/db` or `dL/db_rel`, depending on the parameterization.
    pub d_bias: f64,
}

/// Coefficients of the cross Gram matrix: `dL/ds_ij` plus the scalar parts.
pub(crate) struct GramGrad {
    pub loss: f64,
    /// Row-major `N x N`, `dL/d<U_i, V_j>`.
    pub coef: Vec<f64>,
    pub d_t: f64,
    pub d_b: f64,
}

/// Loss and derivative with respect to every cross inner product.
///
/// With `relative == true` the bias argument is `b_rel` and the terms are
/// `softplus(-t (s_ii - b_rel))`, `softplus(t (s_ij - b_rel))`.
pub(crate) fn gram_grad(gram: &[f64], n: usize, t: f64, bias: f64, relative: bool, parallel: bool) -> GramGrad {
    let b = if relative { bias * t } else { bias };
    // Per-entry sign: -1 on the diagonal (positives), +1 elsewhere.
    let row = |i: usize, coef: &mut [f64]| {
        let mut loss = 0.0;
        let mut d_t = 0.0;
        let mut g_sum = 0.0;
        for (j, (c, &s)) in coef.iter_mut().zip(&gram[i * n..(i + 1) * n]).enumerate() {
            let sign = if i == j { -1.0 } else { 1.0 };
            let (sp, g) = softplus_and_sigmoid(sign * (t * s - b));
            // Shifted level: derivative of the argument w.r.t. t.
            let level = if relative { s - bias } else { s };
            loss += sp;
            *c = sign * t * g;
            d_t += sign * g * level;
            g_sum -= sign * g;
        }
        let d_b = if relative { t * g_sum } else { g_sum };
        (loss, d_t, d_b)
    };
    let mut coef = vec![0.0; n * n];
    let rows: Vec<(f64, f64, f64)> = if parallel && n >= PAR_THRESHOLD {
        par::map_chunks_mut(&mut coef, n, row)
    } else {
        coef.chunks_mut(n.max(1)).enumerate().map(|(i, c)| row(i, c)).collect()
    };
    let mut out = GramGrad {
        loss: 0.0,
        coef,
        d_t: 0.0,
        d_b: 0.0,
    };
    for (l, dt, db) in rows {
        out.loss += l;
        out.d_t += dt;
        out.d_b += db;
    }
    out
}

/// `(softplus(x), sigmoid(x))` from a single exponential.
#[inline]
fn softplus_and_sigmoid(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    // Third-order series; its relative error is below 1e-16 for e < 1e-5.
    let log_term = if e < 1e-5 { e * (1.0 - e * (0.5 - e / 3.0)) } else { e.ln_1p() };
    let sp = x.max(0.0) + log_term;
    let g = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (sp, g)
}

/// Row-major `N x N` matrix of `<U_i, V_j>` for two sets of equal shape.
pub(crate) fn cross_gram_sets(u: &EmbeddingSet, v: &EmbeddingSet) -> Vec<f64> {
    // A row-major N x d buffer is the column-major d x N matrix U^T, and the
    // column-major product V U^T is the row-major U V^T.
    let (n, d) = (u.count(), u.dim());
    let ut = DMatrixView::from_slice(u.as_slice(), d, n);
    let vt = DMatrixView::from_slice(v.as_slice(), d, n);
    vt.tr_mul(&ut).data.into()
}

/// `dL/dU = C V` and `dL/dV = C^T U` for the row-major coefficient matrix `C`.
pub(crate) fn embed_grads(u: &EmbeddingSet, v: &EmbeddingSet, coef: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (u.count(), u.dim());
    let ut = DMatrixView::from_slice(u.as_slice(), d, n);
    let vt = DMatrixView::from_slice(v.as_slice(), d, n);
    // Column-major view of the row-major C is C^T.
    let ct = DMatrixView::from_slice(coef, n, n);
    let gu = vt * ct;
    let gv = ut * ct.transpose();
    (gu.data.into(), gv.data.into())
}

fn loss_with_grad(pair: &PairedConfig, t: f64, bias: f64, relative: bool) -> Result<LossGrad> {
    check_temp(t)?;
    let gram = cross_gram_sets(&pair.u, &pair.v);
    let gg = gram_grad(&gram, pair.count(), t, bias, relative, true);
    let (grad_u, grad_v) = embed_grads(&pair.u, &pair.v, &gg.coef);
    Ok(LossGrad {
        loss: gg.loss,
        grad_u,
        grad_v,
        d_inv_temp: gg.d_t,
        d_bias: gg.d_b,
    })
}

/// Sigmoid loss and its gradient w.r.t. `U`, `V`, `t` and `b`.
pub fn sigmoid_loss_grad(pair: &PairedConfig, t: f64, b: f64) -> Result<LossGrad> {
    loss_with_grad(pair, t, b, false)
}

/// Relative-bias loss and its gradient w.r.t. `U`, `V`, `t` and `b_rel`.
pub fn rb_sigmoid_loss_grad(pair: &PairedConfig, t: f64, b_rel: f64) -> Result<LossGrad> {
    loss_with_grad(pair, t, b_rel, true)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Symmetric InfoNCE: row-wise plus column-wise softmax cross-entropy of
/// `t <U_i, V_j>`, each averaged over `N`. There is no bias term.
pub fn infonce_loss(pair: &PairedConfig, t: f64) -> Result<f64> {
    check_temp(t)?;
    let n = pair.count();
    let gram = pair.cross_gram();
    let per_row = map_rows(n, |i| {
        let row = log_sum_exp((0..n).map(|j| t * gram[i * n + j]));
        let col = log_sum_exp((0..n).map(|j| t * gram[j * n + i]));
        (row - t * gram[i * n + i]) + (col - t * gram[i * n + i])
    });
    Ok((par::ordered_sum(&per_row) / n as f64).max(0.0))
}

/// Triplet loss `sum_{i != j} max(||U_i - V_i||^2 - ||U_i - V_j||^2 + alpha, 0)`.
pub fn triplet_loss(pair: &PairedConfig, alpha: f64) -> f64 {
    let n = pair.count();
    let per_row = map_rows(n, |i| {
        let ui = pair.u.row(i);
        let sq = |v: &[f64]| ui.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let anchor = sq(pair.v.row(i));
        (0..n)
            .filter(|&j| j != i)
            .map(|j| (anchor - sq(pair.v.row(j)) + alpha).max(0.0))
            .sum::<f64>()
    });
    par::ordered_sum(&per_row)
}

/// Largest single softplus term `M` and `N^2 M`, which bracket the loss.
pub fn loss_sandwich(pair: &PairedConfig, t: f64, b: f64) -> Result<(f64, f64)> {
    check_temp(t)?;
    let n = pair.count();
    let per_row = map_rows(n, |i| {
        let ui = pair.u.row(i);
        (0..n)
            .map(|j| {
                let s = dot(ui, pair.v.row(j));
                if i == j {
                    softplus(-t * s + b)
                } else {
                    softplus(t * s - b)
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let lower = per_row.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok((lower, (n * n) as f64 * lower))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMethod {
    Exact,
    MonteCarlo,
}

/// Monte-Carlo estimate of the batch loss with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchEstimate {
    pub mean: f64,
    pub std_err: f64,
}

fn check_batch(n: usize, batch: usize) -> Result<()> {
    if batch < 2 || batch > n {
        Err(Error::InvalidBatch { batch, count: n })
    } else {
        Ok(())
    }
}

/// Expected sigmoid loss of a uniformly random batch of `batch` distinct
/// indices.
pub fn batch_expected_sigmoid_loss(
    pair: &PairedConfig,
    t: f64,
    b: f64,
    batch: usize,
    method: BatchMethod,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    match method {
        BatchMethod::Exact => batch_loss_exact(pair, t, b, batch),
        BatchMethod::MonteCarlo => Ok(batch_loss_monte_carlo(pair, t, b, batch, samples, seed)?.mean),
    }
}

/// Closed form: each positive term appears with probability `B/N`, each
/// ordered negative pair with probability `B(B-1) / (N(N-1))`.
pub fn batch_loss_exact(pair: &PairedConfig, t: f64, b: f64, batch: usize) -> Result<f64> {
    check_temp(t)?;
    let n = pair.count();
    check_batch(n, batch)?;
    if batch == n {
        return sigmoid_loss(pair, t, b);
    }
    let rows = row_terms(pair, t, b);
    let pos: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let neg: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (nf, bf) = (n as f64, batch as f64);
    Ok(bf / nf * par::ordered_sum(&pos) + bf * (bf - 1.0) / (nf * (nf - 1.0)) * par::ordered_sum(&neg))
}

/// Average loss over `samples` independent random batches. Sample `s` draws
/// from its own ChaCha stream, so the estimate does not depend on threads.
pub fn batch_loss_monte_carlo(
    pair: &PairedConfig,
    t: f64,
    b: f64,
    batch: usize,
    samples: usize,
    seed: u64,
) -> Result<BatchEstimate> {
    check_temp(t)?;
    let n = pair.count();
    check_batch(n, batch)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least one sample".into()));
    }
    let gram = pair.cross_gram();
    let values = par::map_indices(samples, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let idx = sample(&mut rng, n, batch).into_vec();
        let mut total = 0.0;
        for &a in &idx {
            for &c in &idx {
                let s = gram[a * n + c];
                total += if a == c { softplus(-t * s + b) } else { softplus(t * s - b) };
            }
        }
        total
    });
    let m = samples as f64;
    let mean = par::ordered_sum(&values) / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok(BatchEstimate {
        mean,
        std_err: (var / m).sqrt(),
    })
}

/// Sum of relative-bias losses over the edges of a synchronization graph.
/// Edge `(j1, j2)` contributes one term with modality `j1` as `U` and `j2` as
/// `V`; with `both_orientations` the reversed term is added as well.
pub fn multimodal_loss(
    config: &MultiModalConfig,
    graph: &SynchronizationGraph,
    t: f64,
    b_rel: f64,
    both_orientations: bool,
) -> Result<f64> {
    check_temp(t)?;
    let k = config.k();
    for &(a, c) in graph.edges() {
        if a >= k || c >= k || a == c {
            return Err(Error::BadEdge(a, c, k));
        }
    }
    let mut total = 0.0;
    for &(a, c) in graph.edges() {
        let pair = config.pair(a, c)?;
        total += rb_sigmoid_loss(&pair, t, b_rel)?;
        if both_orientations {
            total += rb_sigmoid_loss(&pair.swapped(), t, b_rel)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(s: f64) -> PairedConfig {
        let u = EmbeddingSet::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let v = EmbeddingSet::from_rows(&[vec![s, (1.0 - s * s).sqrt()]]).unwrap();
        PairedConfig::new(u, v).unwrap()
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn zero_argument_single_pair() {
        let p = single(0.3);
        let l = sigmoid_loss(&p, 10.0, 3.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = rb_sigmoid_loss(&p, 7.0, 0.3).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_pair_limit_decreases() {
        let p = single(0.5);
        let mut last = f64::INFINITY;
        for t in [1.0, 10.0, 100.0, 1000.0] {
            let l = sigmoid_loss(&p, t, 0.2 * t).unwrap();
            assert!(l < last);
            last = l;
        }
        assert!(last < 1e-100);
    }

    #[test]
    fn temperature_must_be_positive() {
        let p = single(0.1);
        assert_eq!(sigmoid_loss(&p, 0.0, 0.0), Err(Error::NonPositiveTemperature(0.0)));
        assert!(infonce_loss(&p, -1.0).is_err());
        assert!(loss_sandwich(&p, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn infonce_single_pair_is_zero() {
        assert_eq!(infonce_loss(&single(0.2), 5.0).unwrap(), 0.0);
    }

    #[test]
    fn infonce_aligned_limit() {
        let e = EmbeddingSet::standard_basis(4, 4);
        let p = PairedConfig::new(e.clone(), e).unwrap();
        assert!(infonce_loss(&p, 100.0).unwrap() < 1e-40);
    }

    #[test]
    fn triplet_on_orthonormal_pairing() {
        let e = EmbeddingSet::standard_basis(5, 5);
        let p = PairedConfig::new(e.clone(), e).unwrap();
        assert_eq!(triplet_loss(&p, 2.0), 0.0);
        assert!((triplet_loss(&p, 2.1) - 20.0 * 0.1).abs() < 1e-12);
        assert_eq!(triplet_loss(&p, -1.0), 0.0);
    }

    #[test]
    fn batch_checks() {
        let e = EmbeddingSet::standard_basis(3, 3);
        let p = PairedConfig::new(e.clone(), e).unwrap();
        assert!(matches!(batch_loss_exact(&p, 1.0, 0.0, 1), Err(Error::InvalidBatch { .. })));
        assert!(matches!(batch_loss_exact(&p, 1.0, 0.0, 4), Err(Error::InvalidBatch { .. })));
        let full = batch_loss_exact(&p, 3.0, 0.5, 3).unwrap();
        assert_eq!(full, sigmoid_loss(&p, 3.0, 0.5).unwrap());
    }

    #[test]
    fn batch_of_two_pairs_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PairedConfig::random(2, 3, &mut rng);
        let (t, b) = (4.0, 1.0);
        let by_hand = softplus(-t * p.inner(0, 0) + b)
            + softplus(-t * p.inner(1, 1) + b)
            + softplus(t * p.inner(0, 1) - b)
            + softplus(t * p.inner(1, 0) - b);
        assert!((batch_loss_exact(&p, t, b, 2).unwrap() - by_hand).abs() < 1e-12);
        let mc = batch_loss_monte_carlo(&p, t, b, 2, 10, 0).unwrap();
        assert!((mc.mean - by_hand).abs() < 1e-12);
    }
}
