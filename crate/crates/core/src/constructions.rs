//! Explicit constellation builders.
//!
//! Everything here is deterministic given its seed. Lifts always grow the
//! ambient dimension explicitly; nothing reuses a caller's dimension.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, validate_constellation, ConstellationParams, EmbeddingSet, PairedConfig};

/// Points with pairwise inner products at most `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalCode {
    pub points: EmbeddingSet,
    pub alpha: f64,
}

impl SphericalCode {
    /// Largest off-diagonal inner product, recomputed from the points.
    pub fn max_inner_product(&self) -> f64 {
        let n = self.points.count();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max(dot(self.points.row(i), self.points.row(j)));
            }
        }
        worst
    }

    /// Wraps `points` after checking the pairwise bound up to `1e-9`.
    pub fn certify(points: EmbeddingSet, alpha: f64) -> Result<Self> {
        let code = Self { points, alpha };
        let worst = code.max_inner_product();
        if worst > alpha + 1e-9 {
            return Err(Error::ConstructionFailure(format!(
                "code has inner product {worst} above alpha = {alpha}"
            )));
        }
        Ok(code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftParams {
    pub delta: f64,
    pub phi: f64,
}

impl LiftParams {
    pub fn new(delta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) || !(0.0..=1.0).contains(&phi) || delta * delta + phi * phi > 1.0 + 1e-12 {
            return Err(Error::InvalidLift { delta, phi });
        }
        Ok(Self { delta, phi })
    }

    /// `sqrt(1 - delta^2 - phi^2)`, clamped at zero.
    pub fn tail(&self) -> f64 {
        (1.0 - self.delta * self.delta - self.phi * self.phi).max(0.0).sqrt()
    }
}

/// `k` embedding sets of identical shape, one per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModalConfig {
    sets: Vec<EmbeddingSet>,
}

impl MultiModalConfig {
    pub fn new(sets: Vec<EmbeddingSet>) -> Result<Self> {
        if sets.len() < 2 {
            return Err(Error::InvalidK(sets.len()));
        }
        let (n, d) = (sets[0].count(), sets[0].dim());
        if sets.iter().any(|s| s.count() != n || s.dim() != d) {
            return Err(Error::DimensionMismatch("modalities must share (N, d)".into()));
        }
        Ok(Self { sets })
    }

    pub fn random<R: Rng + ?Sized>(k: usize, count: usize, dim: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..k).map(|_| EmbeddingSet::random(count, dim, rng)).collect())
    }

    pub fn k(&self) -> usize {
        self.sets.len()
    }

    pub fn count(&self) -> usize {
        self.sets[0].count()
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }

    pub fn set(&self, j: usize) -> &EmbeddingSet {
        &self.sets[j]
    }

    pub fn sets(&self) -> &[EmbeddingSet] {
        &self.sets
    }

    pub(crate) fn sets_mut(&mut self) -> &mut [EmbeddingSet] {
        &mut self.sets
    }

    /// Modality `a` as `U`, modality `b` as `V`.
    pub fn pair(&self, a: usize, b: usize) -> Result<PairedConfig> {
        let k = self.k();
        if a >= k || b >= k {
            return Err(Error::BadEdge(a, b, k));
        }
        PairedConfig::new(self.sets[a].clone(), self.sets[b].clone())
    }
}

/// Undirected graph over modality indices whose edges carry pairwise losses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynchronizationGraph {
    k: usize,
    edges: Vec<(usize, usize)>,
}

impl SynchronizationGraph {
    pub fn new(k: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(a, b) in &edges {
            if a >= k || b >= k || a == b {
                return Err(Error::BadEdge(a, b, k));
            }
        }
        Ok(Self { k, edges })
    }

    /// The single edge `(0, 1)`.
    pub fn pair() -> Self {
        Self {
            k: 2,
            edges: vec![(0, 1)],
        }
    }

    pub fn complete(k: usize) -> Self {
        let edges = (0..k).flat_map(|a| ((a + 1)..k).map(move |b| (a, b))).collect();
        Self { k, edges }
    }

    /// Modality 0 joined to every other modality.
    pub fn star(k: usize) -> Self {
        Self {
            k,
            edges: (1..k).map(|b| (0, b)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

/// Vertices of a regular simplex: `k` unit vectors in `R^{k-1}` with pairwise
/// inner product `-1/(k-1)`, zero-padded to `ambient_dim` if given.
pub fn simplex(k: usize, ambient_dim: Option<usize>) -> Result<EmbeddingSet> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    let dim = ambient_dim.unwrap_or(k - 1);
    if dim < k - 1 {
        return Err(Error::DimensionMismatch(format!(
            "a {k}-vertex simplex needs dimension >= {}, got {dim}",
            k - 1
        )));
    }
    // Coordinates in the Helmert basis of the sum-zero subspace of R^k.
    let scale = (k as f64 / (k - 1) as f64).sqrt();
    let mut data = vec![0.0; k * dim];
    for m in 1..k {
        let mf = m as f64;
        let norm = (mf * (mf + 1.0)).sqrt();
        for i in 0..k {
            let h = if i < m {
                1.0 / norm
            } else if i == m {
                -mf / norm
            } else {
                0.0
            };
            data[i * dim + (m - 1)] = h * scale;
        }
    }
    EmbeddingSet::new(dim, data)
}

/// Greedy random spherical code in `R^d` with pairwise inner products `<= alpha`.
///
/// The code starts from a structured seed (the cross-polytope `{+-e_i}` when
/// `alpha >= 0`, a regular simplex when `-1/(target_n - 1) <= alpha < 0`) and
/// extends it with uniform samples compatible with every kept point.
pub fn greedy_spherical_code(d: usize, alpha: f64, target_n: usize, seed: u64, max_tries: usize) -> Result<SphericalCode> {
    if d == 0 || !(-1.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "spherical code needs d >= 1 and alpha in [-1, 1), got d = {d}, alpha = {alpha}"
        )));
    }
    if target_n == 0 {
        return Err(Error::InvalidParameter("target size must be positive".into()));
    }
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(target_n);
    if alpha >= 0.0 {
        'seed: for i in 0..d {
            for sign in [1.0, -1.0] {
                if kept.len() == target_n {
                    break 'seed;
                }
                let mut e = vec![0.0; d];
                e[i] = sign;
                kept.push(e);
            }
        }
    } else if target_n >= 2 && alpha >= -1.0 / (target_n - 1) as f64 && target_n <= d + 1 {
        let s = simplex(target_n, Some(d))?;
        kept.extend(s.rows().map(<[f64]>::to_vec));
    } else if target_n == 1 {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        kept.push(e);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tries = 0;
    while kept.len() < target_n && tries < max_tries {
        tries += 1;
        let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = dot(&x, &x).sqrt();
        if n < 1e-12 {
            continue;
        }
        x.iter_mut().for_each(|v| *v /= n);
        if kept.iter().all(|k| dot(k, &x) <= alpha) {
            kept.push(x);
        }
    }
    if kept.len() < target_n {
        return Err(Error::TargetUnreachable {
            accepted: kept.len(),
            target: target_n,
            partial: kept.concat(),
            dim: d,
        });
    }
    SphericalCode::certify(EmbeddingSet::new(d, kept.concat())?, alpha)
}

/// `U_i = V_i = X_i` with `m = (1 - alpha)/2`, `b_rel = (1 + alpha)/2`.
pub fn code_as_constellation(code: &SphericalCode) -> (PairedConfig, ConstellationParams) {
    let pair = PairedConfig {
        u: code.points.clone(),
        v: code.points.clone(),
    };
    let params = ConstellationParams {
        margin: (1.0 - code.alpha) / 2.0,
        rel_bias: (1.0 + code.alpha) / 2.0,
    };
    (pair, params)
}

/// Lifts a constellation two dimensions up:
/// `U'_i = (delta U_i, phi, r)`, `V'_i = (delta V_i, phi, -r)` with
/// `r = sqrt(1 - delta^2 - phi^2)`, giving margin `delta^2 m` and relative bias
/// `delta^2 b_rel + phi^2 - r^2`.
pub fn lift_constellation(
    pair: &PairedConfig,
    params: ConstellationParams,
    lift: LiftParams,
) -> Result<(PairedConfig, ConstellationParams)> {
    let lift = LiftParams::new(lift.delta, lift.phi)?;
    let report = validate_constellation(pair, params, 1e-9)?;
    if !report.passed {
        return Err(Error::PreconditionViolated(format!(
            "input is not a ({}, {})-constellation (min slack {})",
            params.margin, params.rel_bias, report.min_slack
        )));
    }
    let r = lift.tail();
    let u = pair.u.append_columns(lift.delta, &[lift.phi, r]);
    let v = pair.v.append_columns(lift.delta, &[lift.phi, -r]);
    let d2 = lift.delta * lift.delta;
    let lifted = ConstellationParams {
        margin: d2 * params.margin,
        rel_bias: d2 * params.rel_bias + lift.phi * lift.phi - r * r,
    };
    Ok((PairedConfig::new(u, v)?, lifted))
}

/// Parameters of the two-stage recipe that realizes `(m, b_rel)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecipeParams {
    /// Code parameter `(1 + b_rel - 3m) / (1 + b_rel + m)`.
    pub alpha: f64,
    pub delta_sq: f64,
    pub phi_sq: f64,
}

/// Code parameter and lift for a target `(m, b_rel)`, after checking
/// `m > 0`, `m + b_rel < 1`, `3m < 1 + b_rel`.
pub fn constellation_recipe(m: f64, b_rel: f64) -> Result<RecipeParams> {
    let infeasible = |reason: &str| Error::InfeasibleParams {
        margin: m,
        rel_bias: b_rel,
        reason: reason.into(),
    };
    if !(m > 0.0) {
        return Err(infeasible("margin must be strictly positive (alpha = 1 is degenerate)"));
    }
    if !(-1.0..=1.0).contains(&b_rel) {
        return Err(infeasible("relative bias outside [-1, 1]"));
    }
    if !(m + b_rel < 1.0) {
        return Err(infeasible("m + b_rel must be < 1"));
    }
    if !(3.0 * m < 1.0 + b_rel) {
        return Err(infeasible("3m must be < 1 + b_rel"));
    }
    let alpha = (1.0 + b_rel - 3.0 * m) / (1.0 + b_rel + m);
    let delta_sq = 2.0 * m / (1.0 - alpha);
    let phi_sq = (2.0 * b_rel + 2.0 - delta_sq * (3.0 + alpha)) / 4.0;
    Ok(RecipeParams {
        alpha,
        delta_sq,
        phi_sq: phi_sq.max(0.0),
    })
}

/// Builds an `(m, b_rel)`-constellation of `target_n` pairs in `R^d` by lifting
/// a `(d - 2, alpha)` spherical code.
pub fn build_constellation(
    d: usize,
    m: f64,
    b_rel: f64,
    target_n: usize,
    seed: u64,
) -> Result<(PairedConfig, ConstellationParams)> {
    if d < 3 {
        return Err(Error::InfeasibleParams {
            margin: m,
            rel_bias: b_rel,
            reason: format!("dimension must be >= 3, got {d}"),
        });
    }
    let recipe = constellation_recipe(m, b_rel)?;
    let code = greedy_spherical_code(d - 2, recipe.alpha, target_n, seed, 1_000_000)?;
    let (pair, params) = code_as_constellation(&code);
    let delta = recipe.delta_sq.min(1.0).sqrt();
    let phi = recipe.phi_sq.min(1.0 - delta * delta).max(0.0).sqrt();
    let (lifted, _) = lift_constellation(&pair, params, LiftParams::new(delta, phi)?)?;
    Ok((
        lifted,
        ConstellationParams {
            margin: m,
            rel_bias: b_rel,
        },
    ))
}

/// `k` modalities `U^(j)_i = (delta X_i, sqrt(1 - delta^2) w_j)` over a code,
/// with `w_j` the vertices of a regular simplex. Every pair of modalities is an
/// `(m, b_rel)`-constellation with `m = delta^2 (1 - alpha)/2` and
/// `b_rel = delta^2 (1 + alpha)/2 - (1 - delta^2)/(k - 1)`.
pub fn multimodal_constellation(
    code: &SphericalCode,
    k: usize,
    delta: f64,
) -> Result<(MultiModalConfig, ConstellationParams)> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidDelta(delta));
    }
    let w = simplex(k, None)?;
    let sets = (0..k)
        .map(|j| apply_modality_adapter(&code.points, delta, w.row(j)))
        .collect::<Result<Vec<_>>>()?;
    let d2 = delta * delta;
    let params = ConstellationParams {
        margin: d2 * (1.0 - code.alpha) / 2.0,
        rel_bias: d2 * (1.0 + code.alpha) / 2.0 - (1.0 - d2) / (k - 1) as f64,
    };
    Ok((MultiModalConfig::new(sets)?, params))
}

/// `U_i -> (delta U_i, sqrt(1 - delta^2))`, `V_i -> (delta V_i, -sqrt(1 - delta^2))`.
pub fn apply_locked_adapters(pair: &PairedConfig, delta: f64) -> Result<PairedConfig> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidDelta(delta));
    }
    let r = (1.0 - delta * delta).sqrt();
    PairedConfig::new(pair.u.append_columns(delta, &[r]), pair.v.append_columns(delta, &[-r]))
}

/// `X -> (delta X, sqrt(1 - delta^2) w)` for a unit vector `w`.
pub fn apply_modality_adapter(set: &EmbeddingSet, delta: f64, w: &[f64]) -> Result<EmbeddingSet> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidDelta(delta));
    }
    let wn = dot(w, w).sqrt();
    if (wn - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitW(wn));
    }
    let r = (1.0 - delta * delta).sqrt();
    let suffix: Vec<f64> = w.iter().map(|x| r * x).collect();
    Ok(set.append_columns(delta, &suffix))
}

/// Temperature and relative bias under which the raw embeddings have the same
/// relative-bias loss as the adapted ones.
///
/// Adapted cross-modality inner products are `delta^2 s - c` with
/// `c = 1 - delta^2` for the locked/trainable pair (`k = None`) and
/// `c = (1 - delta^2)/(k - 1)` for simplex adapters, so
/// `t (delta^2 s - c - b_rel) = t delta^2 (s - (b_rel + c)/delta^2)`.
pub fn adapter_identity_params(delta: f64, t: f64, b_rel: f64, k: Option<usize>) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    let d2 = delta * delta;
    let shift = match k {
        None => 1.0 - d2,
        Some(k) if k >= 2 => (1.0 - d2) / (k - 1) as f64,
        Some(k) => return Err(Error::InvalidK(k)),
    };
    Ok((t * d2, (b_rel + shift) / d2))
}

/// Default zenith offset for [`tightness_config`].
pub const TIGHTNESS_ZENITH_OFFSET: f64 = 0.02;

/// A configuration with strictly positive positives and strictly negative
/// negatives whose two modalities cannot be fully separated by a hyperplane.
///
/// In `R^3`: two parallel arcs of `n - 2` points at zenith angles
/// `pi/4 + z` (the `U`s) and `3pi/4 - z` (the `V`s), confined to an azimuth
/// wedge narrower than `pi/2`, plus two self-paired points on the equator
/// opposite the wedge. For `d > 3`, `d - 3` self-paired simplex vertices are
/// added and the three-dimensional block is tilted by `eps` towards a further
/// simplex vertex. The whole configuration is rotated by a seeded random
/// orthogonal map.
pub fn tightness_config(d: usize, n: usize, eps: f64, seed: u64) -> Result<PairedConfig> {
    tightness_config_with_offset(d, n, eps, TIGHTNESS_ZENITH_OFFSET, seed)
}

pub fn tightness_config_with_offset(d: usize, n: usize, eps: f64, zenith_offset: f64, seed: u64) -> Result<PairedConfig> {
    if d < 3 || n < d + 1 || !(eps > 0.0 && eps < 0.1) || !(zenith_offset > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tightness construction needs d >= 3, n >= d + 1, 0 < eps < 0.1 (got d = {d}, n = {n}, eps = {eps})"
        )));
    }
    let core_n = n - (d - 3);
    let arc = core_n - 2;
    let (u3, v3) = core_3d(arc, zenith_offset);

    let mut rows_u: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut rows_v: Vec<Vec<f64>> = Vec::with_capacity(n);
    if d == 3 {
        rows_u = u3;
        rows_v = v3;
    } else {
        let omega = simplex(d + 1, None)?;
        for i in 0..(d - 3) {
            rows_u.push(omega.row(i).to_vec());
            rows_v.push(omega.row(i).to_vec());
        }
        // Orthonormal basis of the complement of span(omega_0..omega_{d-4}),
        // with the core's polar axis along the projected tilt direction: the
        // tilt then cancels on every arc-arc inner product.
        let tilt = omega.row(d - 3);
        let basis = complement_basis(&omega, d - 3, d, tilt);
        let embed = |p: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; d];
            for (c, b) in p.iter().zip(&basis) {
                out.iter_mut().zip(b).for_each(|(o, bv)| *o += c * bv);
            }
            let mixed: Vec<f64> = out
                .iter()
                .zip(tilt)
                .map(|(x, w)| eps * w + (1.0 - eps * eps).sqrt() * x)
                .collect();
            let nrm = dot(&mixed, &mixed).sqrt();
            mixed.into_iter().map(|x| x / nrm).collect()
        };
        rows_u.extend(u3.iter().map(|p| embed(p)));
        rows_v.extend(v3.iter().map(|p| embed(p)));
    }

    let rot = random_orthogonal(d, seed);
    let rotate = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| (0..d).map(|a| dot(&rot[a * d..(a + 1) * d], r)).collect())
            .collect()
    };
    let pair = PairedConfig::new(
        EmbeddingSet::from_rows(&rotate(&rows_u))?,
        EmbeddingSet::from_rows(&rotate(&rows_v))?,
    )?;
    if !strict_sign_pattern(&pair, 0.0) {
        return Err(Error::ConstructionFailure(format!(
            "sign pattern fails at zenith offset {zenith_offset} and eps {eps}; retry with a smaller eps"
        )));
    }
    Ok(pair)
}

/// `<U_i, V_i> > tol` for all `i` and `<U_i, V_j> < -tol` for all `i != j`.
pub fn strict_sign_pattern(pair: &PairedConfig, tol: f64) -> bool {
    let n = pair.count();
    (0..n).all(|i| {
        pair.cross_row(i)
            .into_iter()
            .enumerate()
            .all(|(j, s)| if i == j { s > tol } else { s < -tol })
    })
}

/// Tries [`tightness_config`] with `eps` in `{1e-2, 1e-3, 1e-4}`.
pub fn tightness_config_auto(d: usize, n: usize, seed: u64) -> Result<PairedConfig> {
    let mut last = None;
    for eps in [1e-2, 1e-3, 1e-4] {
        match tightness_config(d, n, eps, seed) {
            Ok(p) => return Ok(p),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::ConstructionFailure("no eps tried".into())))
}

fn core_3d(arc: usize, zenith_offset: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    use std::f64::consts::PI;
    // Arc azimuths in [-a, a]; equatorial points at pi +- b, with
    // b in (pi/4, pi/2 - a) so they are mutually obtuse and obtuse to the arc.
    let a = 0.2 * PI;
    let b = 0.275 * PI;
    let step = if arc > 1 { 2.0 * a / (arc - 1) as f64 } else { 0.0 };
    // Neighbouring negatives stay negative iff cos(step) < cot^2(pi/4 + z).
    let z = if arc > 1 {
        let z_max = (1.0 / step.cos().sqrt()).atan() - PI / 4.0;
        zenith_offset.min(0.5 * z_max)
    } else {
        zenith_offset
    };
    let (zu, zv) = (PI / 4.0 + z, 3.0 * PI / 4.0 - z);
    let point = |zen: f64, az: f64| vec![zen.sin() * az.cos(), zen.sin() * az.sin(), zen.cos()];
    let mut u = Vec::with_capacity(arc + 2);
    let mut v = Vec::with_capacity(arc + 2);
    for i in 0..arc {
        let az = -a + step * i as f64;
        u.push(point(zu, az));
        v.push(point(zv, az));
    }
    for az in [PI - b, PI + b] {
        let e = point(PI / 2.0, az);
        u.push(e.clone());
        v.push(e);
    }
    (u, v)
}

/// Orthonormal basis of the complement of the first `used` rows, whose last
/// vector is the normalized projection of `polar` onto that complement.
fn complement_basis(set: &EmbeddingSet, used: usize, d: usize, polar: &[f64]) -> Vec<Vec<f64>> {
    let mut spanned: Vec<Vec<f64>> = Vec::new();
    for i in 0..used {
        let mut v = set.row(i).to_vec();
        gram_schmidt(&mut v, &spanned);
        let n = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        spanned.push(v);
    }
    let mut axis_z = polar.to_vec();
    gram_schmidt(&mut axis_z, &spanned);
    let nz = dot(&axis_z, &axis_z).sqrt();
    axis_z.iter_mut().for_each(|x| *x /= nz);
    spanned.push(axis_z.clone());
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for axis in 0..d {
        if basis.len() == d - used - 1 {
            break;
        }
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        gram_schmidt(&mut v, &spanned);
        gram_schmidt(&mut v, &basis);
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis.push(axis_z);
    basis
}

fn gram_schmidt(v: &mut [f64], against: &[Vec<f64>]) {
    for b in against {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, bv)| *x -= c * bv);
    }
}

/// Haar-ish random orthogonal matrix (row-major) from Gaussian Gram-Schmidt.
fn random_orthogonal(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        gram_schmidt(&mut v, &rows);
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            rows.push(v);
        }
    }
    rows.concat()
}
