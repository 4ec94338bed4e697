//! Paired spherical embeddings and the statistics computed on them.
//!
//! The central object is [`PairedConfig`]: two equally sized sets of unit
//! vectors `U_i`, `V_i` in `R^d`. Most quantities in the crate are functions
//! of the cross inner products `<U_i, V_j>`; positives are the diagonal
//! `i == j`, negatives everything else.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Default tolerance on row norms.
pub const UNIT_TOL: f64 = 1e-9;

/// Rows with norm below this are rejected by [`renormalize`].
pub const ZERO_NORM: f64 = 1e-15;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A set of `count` points in `R^dim`, each on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    dim: usize,
    count: usize,
    data: Vec<f64>,
}

impl EmbeddingSet {
    /// Builds a set from row-major data, projecting every row onto the sphere.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        let raw = Self::from_raw(dim, data)?;
        renormalize(&raw)
    }

    /// Builds a set from rows given as separate vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("rows of unequal length".into()));
        }
        Self::new(dim, rows.concat())
    }

    /// Wraps row-major data without touching the norms. Used by loaders that
    /// report on the raw norms before deciding whether to renormalize.
    pub fn from_raw(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("dimension must be positive".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        let count = data.len() / dim;
        Ok(Self { dim, count, data })
    }

    /// `count` points drawn uniformly from the sphere `S^{dim-1}`.
    pub fn random<R: Rng + ?Sized>(count: usize, dim: usize, rng: &mut R) -> Self {
        assert!(count >= 1 && dim >= 1, "empty embedding set");
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count {
            loop {
                let row: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&row);
                if n > 1e-12 {
                    data.extend(row.iter().map(|x| x / n));
                    break;
                }
            }
        }
        Self { dim, count, data }
    }

    /// The first `count` standard basis vectors of `R^dim`.
    pub fn standard_basis(count: usize, dim: usize) -> Self {
        assert!(count <= dim && count >= 1);
        let mut data = vec![0.0; count * dim];
        for i in 0..count {
            data[i * dim + i] = 1.0;
        }
        Self { dim, count, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Largest `| ||x_i|| - 1 |` over the rows.
    pub fn max_norm_deviation(&self) -> f64 {
        self.rows().map(|r| (norm(r) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Rows re-indexed by `order` (which may repeat indices).
    pub fn select(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(order.len() * self.dim);
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            count: order.len(),
            data,
        }
    }

    /// Each row with `suffix` appended (no renormalization).
    pub(crate) fn append_columns(&self, scale: f64, suffix: &[f64]) -> Self {
        let dim = self.dim + suffix.len();
        let mut data = Vec::with_capacity(self.count * dim);
        for r in self.rows() {
            data.extend(r.iter().map(|x| scale * x));
            data.extend_from_slice(suffix);
        }
        Self {
            dim,
            count: self.count,
            data,
        }
    }

    /// Normalizes rows in place; returns the index of the first degenerate row.
    pub(crate) fn renormalize_in_place(&mut self) -> Result<()> {
        let dim = self.dim;
        for (i, row) in self.data.chunks_exact_mut(dim).enumerate() {
            let n = norm(row);
            if !(n >= ZERO_NORM) {
                return Err(Error::ZeroVector(i));
            }
            row.iter_mut().for_each(|x| *x /= n);
        }
        Ok(())
    }
}

/// Projects every row onto the unit sphere, preserving its direction.
pub fn renormalize(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut out = set.clone();
    out.renormalize_in_place()?;
    Ok(out)
}

/// Paired embeddings `(U_i, V_i)` of two modalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedConfig {
    pub u: EmbeddingSet,
    pub v: EmbeddingSet,
}

impl PairedConfig {
    pub fn new(u: EmbeddingSet, v: EmbeddingSet) -> Result<Self> {
        if u.dim() != v.dim() || u.count() != v.count() {
            return Err(Error::DimensionMismatch(format!(
                "U is {}x{}, V is {}x{}",
                u.count(),
                u.dim(),
                v.count(),
                v.dim()
            )));
        }
        Ok(Self { u, v })
    }

    /// Both sides drawn independently and uniformly from the sphere.
    pub fn random<R: Rng + ?Sized>(count: usize, dim: usize, rng: &mut R) -> Self {
        let u = EmbeddingSet::random(count, dim, rng);
        let v = EmbeddingSet::random(count, dim, rng);
        Self { u, v }
    }

    pub fn count(&self) -> usize {
        self.u.count()
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    /// `<U_i, V_j>`.
    #[inline]
    pub fn inner(&self, i: usize, j: usize) -> f64 {
        dot(self.u.row(i), self.v.row(j))
    }

    /// Row `i` of the cross Gram matrix, `<U_i, V_j>` for all `j`.
    pub fn cross_row(&self, i: usize) -> Vec<f64> {
        let ui = self.u.row(i);
        self.v.rows().map(|vj| dot(ui, vj)).collect()
    }

    /// The full `N x N` cross Gram matrix, row-major.
    pub fn cross_gram(&self) -> Vec<f64> {
        par::map_indices(self.count(), |i| self.cross_row(i)).concat()
    }

    /// Swaps the roles of the two modalities.
    pub fn swapped(&self) -> Self {
        Self {
            u: self.v.clone(),
            v: self.u.clone(),
        }
    }
}

/// Margin `m` and relative bias `b_rel` of a constellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationParams {
    pub margin: f64,
    pub rel_bias: f64,
}

impl ConstellationParams {
    pub fn new(margin: f64, rel_bias: f64) -> Result<Self> {
        if !(margin >= 0.0) || !(rel_bias.abs() <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "constellation needs m >= 0 and |b_rel| <= 1, got ({margin}, {rel_bias})"
            )));
        }
        Ok(Self { margin, rel_bias })
    }

    /// Lowest admissible positive inner product, `b_rel + m`.
    pub fn positive_floor(&self) -> f64 {
        self.rel_bias + self.margin
    }

    /// Highest admissible negative inner product, `b_rel - m`.
    pub fn negative_ceiling(&self) -> f64 {
        self.rel_bias - self.margin
    }
}

/// Margin and relative bias of the threshold halfway between a positive
/// level and a negative level: `((pos - neg)/2, (pos + neg)/2)`.
pub fn margin_and_rel_bias(pos: f64, neg: f64) -> (f64, f64) {
    ((pos - neg) / 2.0, (pos + neg) / 2.0)
}

/// Extremal and mean statistics of positive and negative inner products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramStats {
    pub min_pos: f64,
    pub max_pos: f64,
    pub mean_pos: f64,
    /// Negative statistics are absent when `N == 1`.
    pub min_neg: Option<f64>,
    pub max_neg: Option<f64>,
    pub mean_neg: Option<f64>,
    /// `m* = (min_pos - max_neg) / 2`.
    pub opt_margin: Option<f64>,
    /// `b_rel* = (min_pos + max_neg) / 2`.
    pub opt_rel_bias: Option<f64>,
    /// `min_pos >= max_neg` (vacuously true for a single pair).
    pub separated: bool,
}

impl GramStats {
    /// Margin and relative bias computed from the means instead of extremes.
    pub fn mean_margin_rel_bias(&self) -> Option<(f64, f64)> {
        self.mean_neg.map(|neg| margin_and_rel_bias(self.mean_pos, neg))
    }

    /// Optimal parameters as a [`ConstellationParams`], if the pair is separated.
    pub fn optimal_params(&self) -> Option<ConstellationParams> {
        match (self.opt_margin, self.opt_rel_bias) {
            (Some(m), Some(b)) => ConstellationParams::new(m, b).ok(),
            _ => None,
        }
    }

    fn from_levels(min_pos: f64, max_pos: f64, mean_pos: f64, neg: Option<(f64, f64, f64)>) -> Self {
        let (min_neg, max_neg, mean_neg) = match neg {
            Some((lo, hi, mean)) => (Some(lo), Some(hi), Some(mean)),
            None => (None, None, None),
        };
        let (opt_margin, opt_rel_bias) = match max_neg {
            Some(hi) => {
                let (m, b) = margin_and_rel_bias(min_pos, hi);
                (Some(m), Some(b))
            }
            None => (None, None),
        };
        Self {
            min_pos,
            max_pos,
            mean_pos,
            min_neg,
            max_neg,
            mean_neg,
            opt_margin,
            opt_rel_bias,
            separated: opt_margin.is_none_or(|m| m >= 0.0),
        }
    }
}

#[derive(Clone, Copy)]
struct RowSummary {
    pos: f64,
    neg_min: f64,
    neg_max: f64,
    neg_sum: f64,
}

fn row_summaries(pair: &PairedConfig) -> Vec<RowSummary> {
    let n = pair.count();
    par::map_indices(n, |i| {
        let ui = pair.u.row(i);
        let mut s = RowSummary {
            pos: 0.0,
            neg_min: f64::INFINITY,
            neg_max: f64::NEG_INFINITY,
            neg_sum: 0.0,
        };
        for j in 0..n {
            let ip = dot(ui, pair.v.row(j));
            if i == j {
                s.pos = ip;
            } else {
                s.neg_min = s.neg_min.min(ip);
                s.neg_max = s.neg_max.max(ip);
                s.neg_sum += ip;
            }
        }
        s
    })
}

/// Extremal and mean inner-product statistics, including `m*` and `b_rel*`.
pub fn gram_stats(pair: &PairedConfig) -> GramStats {
    let n = pair.count();
    let rows = row_summaries(pair);
    let pos: Vec<f64> = rows.iter().map(|r| r.pos).collect();
    let min_pos = pos.iter().copied().fold(f64::INFINITY, f64::min);
    let max_pos = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_pos = par::ordered_sum(&pos) / n as f64;
    let neg = (n >= 2).then(|| {
        let lo = rows.iter().map(|r| r.neg_min).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.neg_max).fold(f64::NEG_INFINITY, f64::max);
        let sums: Vec<f64> = rows.iter().map(|r| r.neg_sum).collect();
        (lo, hi, par::ordered_sum(&sums) / (n * (n - 1)) as f64)
    });
    GramStats::from_levels(min_pos, max_pos, mean_pos, neg)
}

/// `(min_i <U_i,V_i>, max_{i != j} <U_i,V_j>)`. Requires `N >= 2`.
pub fn extreme_levels(pair: &PairedConfig) -> (f64, f64) {
    let rows = row_summaries(pair);
    let min_pos = rows.iter().map(|r| r.pos).fold(f64::INFINITY, f64::min);
    let max_neg = rows.iter().map(|r| r.neg_max).fold(f64::NEG_INFINITY, f64::max);
    (min_pos, max_neg)
}

/// Lower-interpolation quantile of an ascending slice.
pub fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = (q * (sorted.len() - 1) as f64).floor() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Like [`gram_stats`] but with outliers trimmed: `min_pos` becomes the
/// `q_pos`-quantile of the positives and `max_neg` the `(1 - q_neg)`-quantile
/// of the negatives. Means and the opposite extremes are untrimmed.
pub fn trimmed_stats(pair: &PairedConfig, q_pos: f64, q_neg: f64) -> Result<GramStats> {
    for q in [q_pos, q_neg] {
        if !(0.0..0.5).contains(&q) {
            return Err(Error::InvalidQuantile(q));
        }
    }
    let base = gram_stats(pair);
    let n = pair.count();
    let mut pos: Vec<f64> = (0..n).map(|i| pair.inner(i, i)).collect();
    pos.sort_by(f64::total_cmp);
    let min_pos = lower_quantile(&pos, q_pos);
    let neg = if n >= 2 {
        let mut negs: Vec<f64> = par::map_indices(n, |i| {
            let row = pair.cross_row(i);
            row.into_iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .collect::<Vec<_>>()
        })
        .concat();
        negs.sort_by(f64::total_cmp);
        Some((
            base.min_neg.unwrap_or(f64::NAN),
            lower_quantile(&negs, 1.0 - q_neg),
            base.mean_neg.unwrap_or(f64::NAN),
        ))
    } else {
        None
    };
    Ok(GramStats::from_levels(min_pos, base.max_pos, base.mean_pos, neg))
}

/// Which constraint of a constellation a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    /// `<U_i, V_i> >= m + b_rel`.
    Positive(usize),
    /// `<U_i, V_j> <= b_rel - m`.
    Negative(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    /// Signed slack; negative means the constraint is violated by `-slack`.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Smallest slack over all `N^2` constraints.
    pub min_slack: f64,
}

/// Checks the constellation inequalities for `params` up to `tol`.
pub fn validate_constellation(
    pair: &PairedConfig,
    params: ConstellationParams,
    tol: f64,
) -> Result<ValidationReport> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be >= 0, got {tol}")));
    }
    let n = pair.count();
    let floor = params.positive_floor();
    let ceiling = params.negative_ceiling();
    let per_row = par::map_indices(n, |i| {
        let mut violations = Vec::new();
        let mut min_slack = f64::INFINITY;
        for (j, ip) in pair.cross_row(i).into_iter().enumerate() {
            let (slack, constraint) = if i == j {
                (ip - floor, Constraint::Positive(i))
            } else {
                (ceiling - ip, Constraint::Negative(i, j))
            };
            min_slack = min_slack.min(slack);
            if slack < -tol {
                violations.push(Violation { constraint, slack });
            }
        }
        (violations, min_slack)
    });
    let min_slack = per_row.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let violations: Vec<Violation> = per_row.into_iter().flat_map(|r| r.0).collect();
    Ok(ValidationReport {
        passed: violations.is_empty(),
        violations,
        min_slack,
    })
}

/// Diagnostics of how well a single shift vector maps `V` onto `U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiReport {
    pub xi: f64,
    /// `(1/N) sum ||U_i - V_i||^2`.
    pub mean_of_norms: f64,
    /// `||mean_i (U_i - V_i)||^2`.
    pub norm_of_mean: f64,
    /// `(1/N) sum ||U_i - V_pi(i)||^2` for a seeded uniform permutation.
    pub random_baseline: f64,
    /// `(1/N) sum ||x_i - mean(x)||^2`, computed directly.
    pub deviation: f64,
}

/// `xi` from its two moment terms.
pub fn xi_from_moments(mean_of_norms: f64, norm_of_mean: f64) -> f64 {
    mean_of_norms - norm_of_mean
}

pub fn xi_report(pair: &PairedConfig, seed: u64) -> Result<XiReport> {
    let n = pair.count();
    if n < 2 {
        return Err(Error::DimensionMismatch("xi needs at least two pairs".into()));
    }
    let d = pair.dim();
    let nf = n as f64;
    let diffs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            pair.u
                .row(i)
                .iter()
                .zip(pair.v.row(i))
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    let mut mean = vec![0.0; d];
    for x in &diffs {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / nf);
    }
    let mean_of_norms = diffs.iter().map(|x| dot(x, x)).sum::<f64>() / nf;
    let norm_of_mean = dot(&mean, &mean);
    let deviation = diffs
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
        .sum::<f64>()
        / nf;

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let random_baseline = perm
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            pair.u
                .row(i)
                .iter()
                .zip(pair.v.row(p))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / nf;

    Ok(XiReport {
        xi: xi_from_moments(mean_of_norms, norm_of_mean),
        mean_of_norms,
        norm_of_mean,
        random_baseline,
        deviation,
    })
}

/// Default residual tolerance for [`cone_membership`].
pub const CONE_TOL: f64 = 1e-8;

const CONE_MAX_ITERS: usize = 200_000;

/// Whether row `i` lies within `tol` of the cone spanned by the other rows.
///
/// Solves the nonnegative least-squares problem
/// `min_{a >= 0} ||U_i - sum_{j != i} a_j U_j||` with accelerated projected
/// gradient. Non-membership is certified with the residual `r` as a dual
/// witness: when every `<r, U_j>` is non-positive, `<r, U_i> / ||r||` lower
/// bounds the distance to the cone.
pub fn cone_membership(set: &EmbeddingSet, i: usize, tol: f64) -> Result<bool> {
    let n = set.count();
    if n < 2 || i >= n {
        return Err(Error::InvalidParameter(format!(
            "cone membership needs N >= 2 and i < N (N = {n}, i = {i})"
        )));
    }
    let target = set.row(i);
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let m = others.len();
    let gram: Vec<f64> = others
        .iter()
        .flat_map(|&a| others.iter().map(move |&b| dot(set.row(a), set.row(b))))
        .collect();
    let lin: Vec<f64> = others.iter().map(|&a| dot(set.row(a), target)).collect();
    let lipschitz = power_iteration_max_eig(&gram, m).max(1e-12);
    let step = 1.0 / lipschitz;

    let residual_of = |coef: &[f64]| -> Vec<f64> {
        let mut r = target.to_vec();
        for (c, &j) in coef.iter().zip(&others) {
            if *c != 0.0 {
                r.iter_mut().zip(set.row(j)).for_each(|(ri, uj)| *ri -= c * uj);
            }
        }
        r
    };
    let certified_outside = |r: &[f64]| -> bool {
        let rn = norm(r);
        if rn <= tol {
            return false;
        }
        let slack = others
            .iter()
            .map(|&j| dot(r, set.row(j)))
            .fold(f64::NEG_INFINITY, f64::max);
        slack <= 1e-14 && dot(r, target) / rn > tol
    };

    let mut x = vec![0.0; m];
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    for iter in 0..CONE_MAX_ITERS {
        if iter % 16 == 0 {
            let r = residual_of(&x);
            if norm(&r) <= tol {
                return Ok(true);
            }
            if certified_outside(&r) {
                return Ok(false);
            }
        }
        let grad: Vec<f64> = (0..m)
            .map(|a| dot(&gram[a * m..(a + 1) * m], &y) - lin[a])
            .collect();
        let next: Vec<f64> = y
            .iter()
            .zip(&grad)
            .map(|(yi, gi)| (yi - step * gi).max(0.0))
            .collect();
        // Projected-gradient stationarity at the new iterate.
        let moved = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        y = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        x = next;
        momentum = next_momentum;
        if moved < 1e-15 && iter > 0 {
            let r = residual_of(&x);
            return Ok(norm(&r) <= tol);
        }
    }
    Err(Error::SolverFailure(format!(
        "cone membership for row {i} did not settle within {CONE_MAX_ITERS} iterations"
    )))
}

/// Largest eigenvalue of a symmetric PSD `m x m` matrix by power iteration,
/// inflated slightly so it can serve as a Lipschitz constant.
pub(crate) fn power_iteration_max_eig(mat: &[f64], m: usize) -> f64 {
    let trace: f64 = (0..m).map(|a| mat[a * m + a]).sum();
    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w: Vec<f64> = (0..m).map(|a| dot(&mat[a * m..(a + 1) * m], &v)).collect();
        let wn = norm(&w);
        if wn == 0.0 {
            return trace.max(1e-12);
        }
        lambda = wn;
        v = w.into_iter().map(|x| x / wn).collect();
    }
    (lambda * 1.05).min(trace).max(lambda)
}
