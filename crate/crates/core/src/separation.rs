//! Linear separation of two modalities.
//!
//! [`modality_gap_certificate`] builds a functional that is positive on every
//! `U_i` and negative on all but at most `d` of the `V_j`, in four steps: a
//! functional positive on all of `U`, its projection onto `conv(U)`, a convex
//! representation of the rescaled projection on the slice `<x, h> = 1` of the
//! cone over `U`, and a Caratheodory reduction of that representation. The
//! returned certificate is always re-verified with direct inner products.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constructions::strict_sign_pattern;
use crate::error::{Error, Result};
use crate::geometry::{dot, EmbeddingSet, PairedConfig};

/// Strict inequalities in verification mean a gap of at least this much.
pub const STRICT_TOL: f64 = 1e-10;

/// Default duality-gap target for hull projection.
pub const HULL_GAP_TOL: f64 = 1e-12;

/// Smallest-to-largest singular value ratio below which a block of points is
/// treated as affinely dependent.
const DEPENDENCE_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    /// Unit certificate vector.
    pub h: Vec<f64>,
    /// Indices `j` for which `<h, V_j> < 0` is not guaranteed.
    pub support: Vec<usize>,
    /// `min_i <h, U_i>`.
    pub u_margin: f64,
    /// Indices `j` with `<h, V_j> >= -STRICT_TOL`.
    pub v_violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeparatorOutcome {
    /// Unit `h` with `<h, U_i> > 0` and `<h, V_j> < 0` for all `i`, `j`.
    Separated(Vec<f64>),
    NotSeparated { epochs: usize },
}

impl SeparatorOutcome {
    pub fn is_separated(&self) -> bool {
        matches!(self, Self::Separated(_))
    }
}

fn normalized(mut h: Vec<f64>) -> Option<Vec<f64>> {
    let n = dot(&h, &h).sqrt();
    if n > 0.0 && n.is_finite() {
        h.iter_mut().for_each(|x| *x /= n);
        Some(h)
    } else {
        None
    }
}

fn axpy(h: &mut [f64], a: f64, x: &[f64]) {
    h.iter_mut().zip(x).for_each(|(hi, xi)| *hi += a * xi);
}

/// Perceptron without bias term on labels `U: +1`, `V: -1`.
///
/// A point counts as a mistake unless it is on the correct side by more than
/// `STRICT_TOL * |h|`, so a returned `h` satisfies both conditions strictly.
pub fn perceptron_separator(u: &EmbeddingSet, v: &EmbeddingSet, max_epochs: usize) -> Result<SeparatorOutcome> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch(format!("U has dim {}, V has dim {}", u.dim(), v.dim())));
    }
    let mut h = vec![0.0; u.dim()];
    for _ in 0..max_epochs {
        let mut mistakes = 0;
        for x in u.rows() {
            if dot(&h, x) <= STRICT_TOL * dot(&h, &h).sqrt() {
                axpy(&mut h, 1.0, x);
                mistakes += 1;
            }
        }
        for x in v.rows() {
            if dot(&h, x) >= -STRICT_TOL * dot(&h, &h).sqrt() {
                axpy(&mut h, -1.0, x);
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            if let Some(h) = normalized(h.clone()) {
                return Ok(SeparatorOutcome::Separated(h));
            }
        }
    }
    Ok(SeparatorOutcome::NotSeparated { epochs: max_epochs })
}

fn min_inner(h: &[f64], set: &EmbeddingSet) -> f64 {
    set.rows().map(|x| dot(h, x)).fold(f64::INFINITY, f64::min)
}

/// Epoch budget of the one-class perceptron in [`positive_functional`].
pub const POSITIVE_PERCEPTRON_EPOCHS: usize = 10_000;
/// Iteration budget of the subgradient fallback in [`positive_functional`].
pub const POSITIVE_SUBGRADIENT_ITERS: usize = 200_000;

/// Unit `h` with `<h, U_i> > 0` for every row.
///
/// A one-class perceptron started at the mean row runs first; if it does not
/// settle, projected subgradient ascent on `min_i <h, U_i>` over the unit ball
/// takes over.
pub fn positive_functional(u: &EmbeddingSet) -> Result<Vec<f64>> {
    let d = u.dim();
    let mut h = vec![0.0; d];
    for x in u.rows() {
        axpy(&mut h, 1.0 / u.count() as f64, x);
    }
    for _ in 0..POSITIVE_PERCEPTRON_EPOCHS {
        let mut mistakes = 0;
        for x in u.rows() {
            if dot(&h, x) <= STRICT_TOL * dot(&h, &h).sqrt() {
                axpy(&mut h, 1.0, x);
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            if let Some(unit) = normalized(h.clone()) {
                if min_inner(&unit, u) > STRICT_TOL {
                    return Ok(unit);
                }
            }
        }
    }

    // Subgradient ascent on the concave function min_i <h, U_i>.
    let mut h = normalized(h).unwrap_or_else(|| {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    });
    let mut best = (min_inner(&h, u), h.clone());
    for k in 0..POSITIVE_SUBGRADIENT_ITERS {
        let (i, _) = u
            .rows()
            .enumerate()
            .map(|(i, x)| (i, dot(&h, x)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        axpy(&mut h, 1.0 / ((k + 1) as f64).sqrt(), u.row(i));
        if let Some(unit) = normalized(h.clone()) {
            h = unit;
        }
        let val = min_inner(&h, u);
        if val > best.0 {
            best = (val, h.clone());
        }
        if best.0 > STRICT_TOL {
            return Ok(best.1);
        }
    }
    Err(Error::Infeasible(format!(
        "no functional positive on all rows found (best min inner product {})",
        best.0
    )))
}

/// Euclidean projection of `point` onto the convex hull of the rows of `set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullProjection {
    /// `sum_i weights_i * row_i`.
    pub projection: Vec<f64>,
    pub weights: Vec<f64>,
    /// Final Frank-Wolfe duality gap, an upper bound on the excess squared-distance objective.
    pub gap: f64,
    pub iterations: usize,
}

/// Iteration budget of [`project_to_hull`].
pub const HULL_MAX_ITERS: usize = 1_000_000;

/// Frank-Wolfe with away steps on `1/2 |sum_i w_i x_i - point|^2` over the
/// simplex, stopped once the duality gap is at most `gap_tol`.
pub fn project_to_hull(point: &[f64], set: &EmbeddingSet, gap_tol: f64) -> Result<HullProjection> {
    let n = set.count();
    let d = set.dim();
    if n == 0 {
        return Err(Error::InvalidParameter("cannot project onto an empty hull".into()));
    }
    if point.len() != d {
        return Err(Error::DimensionMismatch(format!("point has dim {}, set has dim {d}", point.len())));
    }
    // Start at the vertex closest to the point.
    let start = (0..n)
        .map(|i| {
            let r: f64 = set.row(i).iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
            (i, r)
        })
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
        .0;
    let mut w = vec![0.0; n];
    w[start] = 1.0;
    let mut x = set.row(start).to_vec();
    let mut gap = f64::INFINITY;
    for it in 0..HULL_MAX_ITERS {
        let r: Vec<f64> = x.iter().zip(point).map(|(a, b)| a - b).collect();
        let grad: Vec<f64> = set.rows().map(|row| dot(row, &r)).collect();
        let gx = dot(&x, &r);
        let (s, gs) = grad
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |a, (i, &g)| if g < a.1 { (i, g) } else { a });
        let (a, ga) = grad
            .iter()
            .enumerate()
            .filter(|(i, _)| w[*i] > 0.0)
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, &g)| if g > acc.1 { (i, g) } else { acc });
        gap = gx - gs;
        if gap <= gap_tol {
            return Ok(HullProjection {
                projection: x,
                weights: w,
                gap: gap.max(0.0),
                iterations: it,
            });
        }
        let away_gap = ga - gx;
        let (dir, gamma_max, toward) = if gap >= away_gap || a == usize::MAX {
            let dir: Vec<f64> = set.row(s).iter().zip(&x).map(|(p, q)| p - q).collect();
            (dir, 1.0, true)
        } else {
            let dir: Vec<f64> = x.iter().zip(set.row(a)).map(|(p, q)| p - q).collect();
            let wa = w[a];
            (dir, if wa < 1.0 { wa / (1.0 - wa) } else { f64::INFINITY }, false)
        };
        let dd = dot(&dir, &dir);
        if dd <= 0.0 {
            break;
        }
        let gamma = (-dot(&r, &dir) / dd).clamp(0.0, gamma_max);
        if toward {
            w.iter_mut().for_each(|wi| *wi *= 1.0 - gamma);
            w[s] += gamma;
        } else {
            w.iter_mut().for_each(|wi| *wi *= 1.0 + gamma);
            w[a] -= gamma;
            if gamma >= gamma_max || w[a] < 1e-300 {
                w[a] = 0.0;
            }
        }
        // Rebuild x from the weights now and then to stop drift.
        if it % 64 == 63 {
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= total);
            x = combine(set, &w);
        } else {
            axpy(&mut x, gamma, &dir);
        }
    }
    Err(Error::SolverFailure(format!(
        "hull projection did not reach duality gap {gap_tol} (last gap {gap})"
    )))
}

fn combine(set: &EmbeddingSet, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; set.dim()];
    for (row, &wi) in set.rows().zip(w) {
        if wi != 0.0 {
            axpy(&mut out, wi, row);
        }
    }
    out
}

/// Shrinks the support of a convex representation of `target` to at most `d`
/// points, assuming the points lie on a common affine hyperplane.
///
/// Repeatedly finds an affine dependence among `d + 1` supported points (the
/// smallest right singular vector of their `(d + 1) x (d + 1)` affine matrix)
/// and moves the weights along it until one reaches zero.
pub fn caratheodory_reduce(weights: &[f64], points: &EmbeddingSet, target: &[f64]) -> Result<Vec<f64>> {
    let n = points.count();
    let d = points.dim();
    if weights.len() != n || target.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} weights and target of dim {} for {n} points in R^{d}",
            weights.len(),
            target.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < -1e-12) || (total - 1.0).abs() > 1e-8 {
        return Err(Error::PreconditionViolated("weights are not convex coefficients".into()));
    }
    let residual = |w: &[f64]| {
        let x = combine(points, w);
        x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let scale = 1.0 + target.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual(weights) > 1e-8 * scale {
        return Err(Error::PreconditionViolated("weights do not reproduce the target point".into()));
    }
    let mut w: Vec<f64> = weights.iter().map(|&x| x.max(0.0)).collect();
    loop {
        let support: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
        if support.len() <= d {
            break;
        }
        let block = &support[..d + 1];
        let mut a = DMatrix::<f64>::zeros(d + 1, d + 1);
        for (c, &i) in block.iter().enumerate() {
            for r in 0..d {
                a[(r, c)] = points.row(i)[r];
            }
            a[(d, c)] = 1.0;
        }
        let svd = a.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::NumericalDegeneracy("singular value decomposition failed".into()))?;
        let (idx_min, s_min) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let s_max = svd.singular_values.max();
        if !(s_max > 0.0) || s_min > DEPENDENCE_RATIO * s_max {
            return Err(Error::NumericalDegeneracy(format!(
                "no affine dependence among {} points (singular value ratio {:.3e}); points are not on a common hyperplane",
                d + 1,
                s_min / s_max
            )));
        }
        let c: Vec<f64> = (0..d + 1).map(|k| v_t[(idx_min, k)]).collect();
        // Shift w -= theta c, with theta limited by the first weight to hit 0.
        let (pos, theta) = block
            .iter()
            .zip(&c)
            .filter(|(_, &ck)| ck > 0.0)
            .map(|(&i, &ck)| (i, w[i] / ck))
            .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if pos == usize::MAX {
            return Err(Error::NumericalDegeneracy("affine dependence has no positive entry".into()));
        }
        for (&i, &ck) in block.iter().zip(&c) {
            w[i] = (w[i] - theta * ck).max(0.0);
        }
        w[pos] = 0.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    if residual(&w) > 1e-6 * scale {
        return Err(Error::NumericalDegeneracy(format!(
            "reduced weights reproduce the target only to {:.3e}",
            residual(&w)
        )));
    }
    Ok(w)
}

/// Certificate that the two modalities of a strictly sign-patterned
/// configuration are separated up to at most `d` exceptions.
pub fn modality_gap_certificate(pair: &PairedConfig) -> Result<SeparationResult> {
    let n = pair.count();
    let d = pair.dim();
    if n < d + 2 {
        return Err(Error::PreconditionViolated(format!("need N >= d + 2, got N = {n}, d = {d}")));
    }
    if !strict_sign_pattern(pair, STRICT_TOL) {
        return Err(Error::PreconditionViolated(
            "sign pattern <U_i, V_i> > 0, <U_i, V_j> < 0 (i != j) does not hold".into(),
        ));
    }
    let h0 = positive_functional(&pair.u)?;
    let positive_point = |anchor: &[f64]| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let hull = project_to_hull(anchor, &pair.u, HULL_GAP_TOL)?;
        let hp = combine(&pair.u, &hull.weights);
        let ok = dot(&hp, &hp) > 0.0 && pair.u.rows().all(|x| dot(x, &hp) > 0.0);
        Ok(ok.then_some((hp, hull.weights)))
    };
    // The projection of h0 can fail to stay positive; the minimum-norm point
    // of the hull cannot, since <U_i, p> >= |p|^2 there.
    let (hp, weights) = match positive_point(&h0)? {
        Some(found) => found,
        None => positive_point(&vec![0.0; d])?
            .ok_or_else(|| Error::SolverFailure("no hull point is positive on every U_i".into()))?,
    };
    let hp_sq = dot(&hp, &hp);
    let scores: Vec<f64> = pair.u.rows().map(|x| dot(x, &hp)).collect();
    // Q_i = U_i / <U_i, h'> all lie on <x, h'> = 1, as does h' / |h'|^2.
    let q_data: Vec<f64> = pair
        .u
        .rows()
        .zip(&scores)
        .flat_map(|(x, &s)| x.iter().map(move |v| v / s))
        .collect();
    let q = EmbeddingSet::from_raw(d, q_data)?;
    let target: Vec<f64> = hp.iter().map(|v| v / hp_sq).collect();
    let mu: Vec<f64> = weights.iter().zip(&scores).map(|(w, s)| w * s / hp_sq).collect();
    let reduced = caratheodory_reduce(&mu, &q, &target)?;

    let h = normalized(combine(&q, &reduced))
        .ok_or_else(|| Error::NumericalDegeneracy("certificate vector vanished".into()))?;
    let support: Vec<usize> = (0..n).filter(|&i| reduced[i] > 0.0).collect();
    let u_margin = min_inner(&h, &pair.u);
    let v_violations: Vec<usize> = (0..n).filter(|&j| dot(&h, pair.v.row(j)) >= -STRICT_TOL).collect();
    if !(u_margin > STRICT_TOL) {
        return Err(Error::SolverFailure(format!("certificate has u_margin {u_margin}")));
    }
    if support.len() > d || v_violations.iter().any(|j| !support.contains(j)) {
        return Err(Error::SolverFailure("certificate violates its support bound".into()));
    }
    Ok(SeparationResult {
        h,
        support,
        u_margin,
        v_violations,
    })
}
