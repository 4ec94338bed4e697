//! Sphere-constrained Adam training of free embeddings and loss parameters.
//!
//! Each step takes a Euclidean Adam step on every trainable quantity and then
//! projects embedding rows back onto the unit sphere. The inverse temperature
//! is trained through `t = exp(t')` and the adapter scale through
//! `delta = sigmoid(x)`. The optimized objective is the loss averaged over the
//! `N^2` pairs of each edge and summed over edges; every reported loss uses the
//! same normalization.
//!
//! A single run is sequential and deterministic given its seed. Sweeps run
//! independent configurations in parallel and return rows in input order.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constructions::{MultiModalConfig, SynchronizationGraph};
use crate::error::{Error, Result};
use crate::geometry::{extreme_levels, EmbeddingSet, PairedConfig};
use crate::losses::{cross_gram_sets, embed_grads, gram_grad, sigmoid, Parameterization};
use crate::par;

/// Which quantities receive gradient updates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Trainable {
    /// Indices of modalities whose embeddings stay fixed.
    pub frozen_modalities: Vec<usize>,
    pub log_inv_temp: bool,
    /// `b` or `b_rel`, depending on the parameterization.
    pub bias: bool,
    pub adapter_delta: bool,
}

impl Default for Trainable {
    fn default() -> Self {
        Self {
            frozen_modalities: Vec::new(),
            log_inv_temp: true,
            bias: true,
            adapter_delta: false,
        }
    }
}

impl Trainable {
    /// Modality 0 frozen; everything else trainable.
    pub fn locked_first() -> Self {
        Self {
            frozen_modalities: vec![0],
            ..Self::default()
        }
    }

    /// Nothing trains.
    pub fn none(k: usize) -> Self {
        Self {
            frozen_modalities: (0..k).collect(),
            log_inv_temp: false,
            bias: false,
            adapter_delta: false,
        }
    }
}

/// Initial values of the scalar parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Init {
    pub inv_temp: f64,
    /// `b` or `b_rel`, depending on the parameterization.
    pub bias: f64,
    /// Adapter logit `x` with `delta = sigmoid(x)`.
    pub adapter_logit: f64,
}

impl Default for Init {
    fn default() -> Self {
        Self {
            inv_temp: 10.0,
            bias: 0.0,
            adapter_logit: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub count: usize,
    pub modalities: usize,
    /// Edges over modality indices; `None` means the complete graph.
    pub graph: Option<Vec<(usize, usize)>>,
    pub parameterization: Parameterization,
    pub trainable: Trainable,
    pub init: Init,
    pub lr: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Minibatch size; `None` trains on all `N` pairs every step.
    pub batch: Option<usize>,
    pub record_every: usize,
    /// Route the loss through a locked/trainable adapter pair (two modalities).
    pub adapter: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            count: 100,
            modalities: 2,
            graph: None,
            parameterization: Parameterization::RelBias,
            trainable: Trainable::default(),
            init: Init::default(),
            lr: 0.01,
            iterations: 10_000,
            seed: 0,
            batch: None,
            record_every: 100,
            adapter: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.dim == 0 || self.count == 0 {
            return bad(format!("dim and count must be positive, got {} and {}", self.dim, self.count));
        }
        if self.modalities < 2 {
            return Err(Error::InvalidK(self.modalities));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.init.inv_temp > 0.0 && self.init.inv_temp.is_finite()) {
            return Err(Error::NonPositiveTemperature(self.init.inv_temp));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if let Some(b) = self.batch {
            if b < 2 || b > self.count {
                return Err(Error::InvalidBatch {
                    batch: b,
                    count: self.count,
                });
            }
        }
        if let Some(&j) = self.trainable.frozen_modalities.iter().find(|&&j| j >= self.modalities) {
            return bad(format!("frozen modality {j} out of range for k = {}", self.modalities));
        }
        if self.adapter {
            if self.modalities != 2 {
                return bad("explicit adapters need exactly two modalities".into());
            }
            if self.parameterization != Parameterization::RelBias {
                return bad("explicit adapters need the relative-bias parameterization".into());
            }
        } else if self.trainable.adapter_delta {
            return bad("adapter_delta is trainable but no adapter is configured".into());
        }
        self.graph()?;
        Ok(())
    }

    pub fn graph(&self) -> Result<SynchronizationGraph> {
        match &self.graph {
            Some(edges) => SynchronizationGraph::new(self.modalities, edges.clone()),
            None => Ok(SynchronizationGraph::complete(self.modalities)),
        }
    }

    /// Uniform random embeddings for every modality, drawn in modality order.
    pub fn initial_embeddings(&self) -> Result<MultiModalConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        MultiModalConfig::random(self.modalities, self.count, self.dim, &mut rng)
    }
}

/// Extremal statistics of one configuration, minimized over edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSummary {
    /// `(min_pos - max_neg) / 2` on the worst edge.
    pub margin: f64,
    /// `(min_pos + max_neg) / 2` on the same edge.
    pub opt_rel_bias: f64,
    /// `min_pos - max_neg`, i.e. twice the margin.
    pub gap: f64,
    /// Every edge has `min_pos > max_neg`.
    pub separated: bool,
}

impl EdgeSummary {
    pub fn of_pairs<'a>(pairs: impl IntoIterator<Item = &'a PairedConfig>) -> Self {
        let mut worst: Option<(f64, f64)> = None;
        for p in pairs {
            let (min_pos, max_neg) = extreme_levels(p);
            if worst.is_none_or(|(a, b)| min_pos - max_neg < a - b) {
                worst = Some((min_pos, max_neg));
            }
        }
        let (min_pos, max_neg) = worst.unwrap_or((f64::NAN, f64::NAN));
        Self {
            margin: (min_pos - max_neg) / 2.0,
            opt_rel_bias: (min_pos + max_neg) / 2.0,
            gap: min_pos - max_neg,
            separated: min_pos > max_neg,
        }
    }

    pub fn of_config(config: &MultiModalConfig, graph: &SynchronizationGraph) -> Result<Self> {
        let pairs = graph
            .edges()
            .iter()
            .map(|&(a, c)| config.pair(a, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::of_pairs(&pairs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Full-data loss averaged over pairs, summed over edges.
    pub loss: f64,
    pub inv_temp: f64,
    /// The trained scalar: `b` or `b_rel`.
    pub bias: f64,
    /// `b / t` under the bias parameterization, `b_rel` otherwise.
    pub rel_bias: f64,
    /// Statistics of the configuration the loss sees (adapted if adapters are on).
    pub stats: EdgeSummary,
    /// Adapter scale and the statistics of the raw, de-adapted embeddings.
    pub delta: Option<f64>,
    pub raw_stats: Option<EdgeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// Objective at every step, on the rows used by that step.
    pub step_losses: Vec<f64>,
    /// Final raw embeddings, one set per modality.
    pub final_config: MultiModalConfig,
}

impl TrainTrace {
    /// The record taken after the last step.
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always has a final record")
    }

    /// First step whose loss is below `threshold`.
    pub fn first_step_below(&self, threshold: f64) -> Option<usize> {
        self.step_losses.iter().position(|&l| l < threshold)
    }

    /// Final modalities 0 and 1 as a pair.
    pub fn final_pair(&self) -> PairedConfig {
        self.final_config.pair(0, 1).expect("at least two modalities")
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, step: i32) {
        let c1 = 1.0 - BETA1.powi(step);
        let c2 = 1.0 - BETA2.powi(step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Current values of every trained quantity.
#[derive(Debug, Clone)]
struct State {
    sets: MultiModalConfig,
    log_t: f64,
    bias: f64,
    adapter_logit: f64,
}

struct Gradient {
    loss: f64,
    sets: Vec<Vec<f64>>,
    log_t: f64,
    bias: f64,
    adapter_logit: f64,
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    graph: SynchronizationGraph,
    relative: bool,
}

impl Trainer<'_> {
    fn delta(&self, state: &State) -> Option<f64> {
        self.config.adapter.then(|| sigmoid(state.adapter_logit))
    }

    /// Loss and gradient on the rows in `rows` (all rows if `None`).
    fn evaluate(&self, state: &State, rows: Option<&[usize]>, with_grad: bool) -> Gradient {
        let t = state.log_t.exp();
        let delta = self.delta(state);
        let k = state.sets.k();
        let subset: Vec<EmbeddingSet>;
        let sets: &[EmbeddingSet] = match rows {
            Some(idx) => {
                subset = state.sets.sets().iter().map(|s| s.select(idx)).collect();
                &subset
            }
            None => state.sets.sets(),
        };
        let n = sets[0].count();
        let scale = 1.0 / (n * n) as f64;
        let mut out = Gradient {
            loss: 0.0,
            sets: vec![Vec::new(); k],
            log_t: 0.0,
            bias: 0.0,
            adapter_logit: 0.0,
        };
        for &(a, c) in self.graph.edges() {
            let mut gram = cross_gram_sets(&sets[a], &sets[c]);
            if let Some(dl) = delta {
                let d2 = dl * dl;
                gram.iter_mut().for_each(|s| *s = d2 * (*s + 1.0) - 1.0);
            }
            let gg = gram_grad(&gram, n, t, state.bias, self.relative, false);
            out.loss += gg.loss * scale;
            if !with_grad {
                continue;
            }
            out.log_t += gg.d_t * t * scale;
            out.bias += gg.d_b * scale;
            let mut coef = gg.coef;
            if let Some(dl) = delta {
                // s' = delta^2 (s + 1) - 1, so ds'/ds = delta^2 and
                // ds'/dx = 2 delta (s + 1) * delta (1 - delta).
                let d2 = dl * dl;
                let mut d_delta = 0.0;
                for (cf, s_adapted) in coef.iter().zip(&gram) {
                    let s = (s_adapted + 1.0) / d2 - 1.0;
                    d_delta += cf * 2.0 * dl * (s + 1.0);
                }
                out.adapter_logit += d_delta * dl * (1.0 - dl) * scale;
                coef.iter_mut().for_each(|cf| *cf *= d2);
            }
            coef.iter_mut().for_each(|cf| *cf *= scale);
            let (gu, gv) = embed_grads(&sets[a], &sets[c], &coef);
            accumulate(&mut out.sets[a], &gu);
            accumulate(&mut out.sets[c], &gv);
        }
        out
    }

    /// `full_loss` is reused when the caller already evaluated all rows.
    fn record(&self, state: &State, iteration: usize, full_loss: Option<f64>) -> Result<TraceRecord> {
        let loss = full_loss.unwrap_or_else(|| self.evaluate(state, None, false).loss);
        if !loss.is_finite() {
            return Err(Error::DivergenceDetected { iteration, loss });
        }
        let t = state.log_t.exp();
        let raw = EdgeSummary::of_config(&state.sets, &self.graph)?;
        let (stats, delta, raw_stats) = match self.delta(state) {
            Some(dl) => {
                let pair = state.sets.pair(0, 1)?;
                let adapted = PairedConfig::new(
                    pair.u.append_columns(dl, &[(1.0 - dl * dl).sqrt()]),
                    pair.v.append_columns(dl, &[-(1.0 - dl * dl).sqrt()]),
                )?;
                (EdgeSummary::of_pairs([&adapted]), Some(dl), Some(raw))
            }
            None => (raw, None, None),
        };
        Ok(TraceRecord {
            iteration,
            loss,
            inv_temp: t,
            bias: state.bias,
            rel_bias: if self.relative { state.bias } else { state.bias / t },
            stats,
            delta,
            raw_stats,
        })
    }
}

fn accumulate(acc: &mut Vec<f64>, g: &[f64]) {
    if acc.is_empty() {
        acc.extend_from_slice(g);
    } else {
        acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
}

/// Trains from embeddings drawn by [`TrainConfig::initial_embeddings`].
pub fn train(config: &TrainConfig) -> Result<TrainTrace> {
    config.validate()?;
    train_from(config, config.initial_embeddings()?)
}

/// Trains starting from the given embeddings.
pub fn train_from(config: &TrainConfig, initial: MultiModalConfig) -> Result<TrainTrace> {
    config.validate()?;
    if initial.k() != config.modalities || initial.count() != config.count || initial.dim() != config.dim {
        return Err(Error::DimensionMismatch(format!(
            "initial embeddings are k = {}, N = {}, d = {}; config expects k = {}, N = {}, d = {}",
            initial.k(),
            initial.count(),
            initial.dim(),
            config.modalities,
            config.count,
            config.dim
        )));
    }
    let trainer = Trainer {
        config,
        graph: config.graph()?,
        relative: config.parameterization == Parameterization::RelBias,
    };
    let trainable_set: Vec<bool> = (0..config.modalities)
        .map(|j| !config.trainable.frozen_modalities.contains(&j))
        .collect();
    let mut state = State {
        sets: initial,
        log_t: config.init.inv_temp.ln(),
        bias: config.init.bias,
        adapter_logit: config.init.adapter_logit,
    };
    let mut set_opt: Vec<Adam> = (0..config.modalities)
        .map(|_| Adam::new(config.count * config.dim))
        .collect();
    let mut scalar_opt = Adam::new(3);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed);
    batch_rng.set_stream(1);

    let mut records = Vec::with_capacity(config.iterations / config.record_every + 2);
    let mut step_losses = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let rows = config
            .batch
            .filter(|&b| b < config.count)
            .map(|b| {
                let mut idx = sample(&mut batch_rng, config.count, b).into_vec();
                idx.sort_unstable();
                idx
            });
        let grad = trainer.evaluate(&state, rows.as_deref(), true);
        if !grad.loss.is_finite() {
            return Err(Error::DivergenceDetected {
                iteration: it,
                loss: grad.loss,
            });
        }
        step_losses.push(grad.loss);
        if it % config.record_every == 0 {
            let full = rows.is_none().then_some(grad.loss);
            records.push(trainer.record(&state, it, full)?);
        }
        let step = (it + 1) as i32;
        for (j, g) in grad.sets.iter().enumerate() {
            if !trainable_set[j] || g.is_empty() {
                continue;
            }
            let full_grad = match &rows {
                Some(idx) => scatter_rows(g, idx, config.count, config.dim),
                None => g.clone(),
            };
            let set = &mut state.sets.sets_mut()[j];
            set_opt[j].step(set.as_mut_slice(), &full_grad, config.lr, step);
            set.renormalize_in_place()?;
        }
        let mut scalars = [state.log_t, state.bias, state.adapter_logit];
        let scalar_grad = [
            if config.trainable.log_inv_temp { grad.log_t } else { 0.0 },
            if config.trainable.bias { grad.bias } else { 0.0 },
            if config.trainable.adapter_delta { grad.adapter_logit } else { 0.0 },
        ];
        if scalar_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::DivergenceDetected {
                iteration: it,
                loss: grad.loss,
            });
        }
        scalar_opt.step(&mut scalars, &scalar_grad, config.lr, step);
        // Frozen scalars have zero gradient, so Adam leaves them unchanged.
        [state.log_t, state.bias, state.adapter_logit] = scalars;
    }
    records.push(trainer.record(&state, config.iterations, None)?);
    Ok(TrainTrace {
        records,
        step_losses,
        final_config: state.sets,
    })
}

fn scatter_rows(g: &[f64], rows: &[usize], count: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; count * dim];
    for (r, &i) in rows.iter().enumerate() {
        out[i * dim..(i + 1) * dim].copy_from_slice(&g[r * dim..(r + 1) * dim]);
    }
    out
}

/// [`train`] for `k >= 2` modalities over the configured graph.
pub fn train_multimodal(config: &TrainConfig) -> Result<TrainTrace> {
    train(config)
}

/// [`train`] with the locked/trainable adapter pair inside the loss.
pub fn train_with_explicit_adapters(config: &TrainConfig) -> Result<TrainTrace> {
    let config = TrainConfig {
        adapter: true,
        ..config.clone()
    };
    train(&config)
}

/// One row of a fixed relative-bias sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelBiasSweepRow {
    pub rel_bias: f64,
    pub final_inv_temp: f64,
    pub final_margin: f64,
    pub final_gap: f64,
    pub final_loss: f64,
}

/// Trains once per value with `b_rel` frozen at that value.
pub fn sweep_fixed_rel_bias(base: &TrainConfig, rb_values: &[f64]) -> Result<Vec<RelBiasSweepRow>> {
    if base.parameterization != Parameterization::RelBias {
        return Err(Error::InvalidParameter(
            "fixed relative-bias sweeps need the relative-bias parameterization".into(),
        ));
    }
    let rows = par::map_slice(rb_values, |&rb| {
        let mut cfg = base.clone();
        cfg.init.bias = rb;
        cfg.trainable.bias = false;
        let trace = train(&cfg)?;
        let last = trace.last();
        Ok(RelBiasSweepRow {
            rel_bias: rb,
            final_inv_temp: last.inv_temp,
            final_margin: last.stats.margin,
            final_gap: last.stats.gap,
            final_loss: last.loss,
        })
    });
    rows.into_iter().collect()
}

/// One cell of an initialization sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSweepRow {
    pub init_inv_temp: f64,
    pub init_rel_bias: f64,
    pub final_margin: f64,
    pub final_gap: f64,
    pub final_loss: f64,
}

/// Trains on the grid `t0_values x rb0_values` (row-major in `t0`).
pub fn sweep_init(base: &TrainConfig, t0_values: &[f64], rb0_values: &[f64]) -> Result<Vec<InitSweepRow>> {
    if base.parameterization != Parameterization::RelBias || !base.trainable.log_inv_temp || !base.trainable.bias {
        return Err(Error::InvalidParameter(
            "initialization sweeps need relative bias with t and b_rel trainable".into(),
        ));
    }
    let grid: Vec<(f64, f64)> = t0_values
        .iter()
        .flat_map(|&t| rb0_values.iter().map(move |&b| (t, b)))
        .collect();
    let rows = par::map_slice(&grid, |&(t0, rb0)| {
        let mut cfg = base.clone();
        cfg.init.inv_temp = t0;
        cfg.init.bias = rb0;
        let trace = train(&cfg)?;
        let last = trace.last();
        Ok(InitSweepRow {
            init_inv_temp: t0,
            init_rel_bias: rb0,
            final_margin: last.stats.margin,
            final_gap: last.stats.gap,
            final_loss: last.loss,
        })
    });
    rows.into_iter().collect()
}

/// Loss (pair-averaged) and gradient of the training objective at explicit
/// parameter values, exposed for gradient checks.
pub fn objective_and_gradient(
    config: &TrainConfig,
    sets: &MultiModalConfig,
    log_inv_temp: f64,
    bias: f64,
    adapter_logit: f64,
) -> Result<ObjectiveGradient> {
    config.validate()?;
    let trainer = Trainer {
        config,
        graph: config.graph()?,
        relative: config.parameterization == Parameterization::RelBias,
    };
    let state = State {
        sets: sets.clone(),
        log_t: log_inv_temp,
        bias,
        adapter_logit,
    };
    let g = trainer.evaluate(&state, None, true);
    Ok(ObjectiveGradient {
        loss: g.loss,
        sets: g
            .sets
            .into_iter()
            .map(|s| if s.is_empty() { vec![0.0; sets.count() * sets.dim()] } else { s })
            .collect(),
        log_inv_temp: g.log_t,
        bias: g.bias,
        adapter_logit: g.adapter_logit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGradient {
    pub loss: f64,
    pub sets: Vec<Vec<f64>>,
    pub log_inv_temp: f64,
    pub bias: f64,
    pub adapter_logit: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            dim: 3,
            count: 5,
            iterations: 50,
            record_every: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn frozen_system_is_constant() {
        let cfg = TrainConfig {
            trainable: Trainable::none(2),
            ..small()
        };
        let trace = train(&cfg).unwrap();
        let first = trace.records[0].loss;
        assert!(trace.records.iter().all(|r| r.loss == first));
        assert_eq!(trace.final_config, cfg.initial_embeddings().unwrap());
    }

    #[test]
    fn records_cover_the_run() {
        let trace = train(&small()).unwrap();
        let its: Vec<usize> = trace.records.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![0, 10, 20, 30, 40, 50]);
        assert!(trace.final_config.sets().iter().all(|s| s.max_norm_deviation() < 1e-9));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { lr: 0.0, ..small() }.validate().is_err());
        assert!(TrainConfig { iterations: 0, ..small() }.validate().is_err());
        assert!(matches!(
            TrainConfig { batch: Some(9), ..small() }.validate(),
            Err(Error::InvalidBatch { .. })
        ));
        let mut cfg = small();
        cfg.init.inv_temp = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::NonPositiveTemperature(_))));
        assert!(TrainConfig {
            adapter: true,
            modalities: 3,
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut opt = Adam::new(2);
        let mut p = [1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.5], 0.01, 1);
        assert!((p[0] - 0.99).abs() < 1e-9 && (p[1] + 0.99).abs() < 1e-9);
    }
}
