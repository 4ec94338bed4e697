//! Executes one experiment and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use constellation::bounds::{exponent_bounds, margin_feasibility, nats_to_bits};
use constellation::constructions::{
    build_constellation, constellation_recipe, strict_sign_pattern, tightness_config, tightness_config_auto,
};
use constellation::geometry::{gram_stats, trimmed_stats, validate_constellation, xi_report, PairedConfig};
use constellation::optimizer::{sweep_fixed_rel_bias, sweep_init, train, EdgeSummary, TrainConfig, TrainTrace};
use constellation::retrieval::{nn_retrieve, robustness_check, Direction};
use constellation::separation::{modality_gap_certificate, perceptron_separator, STRICT_TOL};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{AnalyzeParams, Experiment};
use crate::embeddings::{read_pair, write_pair};
use crate::error::{CliError, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const EMBEDDINGS_FILE: &str = "final_embeddings.cnst";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const BOUNDS_FILE: &str = "bounds.csv";
pub const ANALYSIS_FILE: &str = "analysis.csv";
pub const RETRIEVAL_FILE: &str = "retrieval.csv";
pub const ERROR_FILE: &str = "error.json";

/// Tolerance used when checking a construction against its requested parameters.
const CONSTRUCT_TOL: f64 = 1e-9;

/// The fixed-column report of `analyze`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisRow {
    pub min_pos: f64,
    pub max_pos: f64,
    pub mean_pos: f64,
    pub min_neg: f64,
    pub max_neg: f64,
    pub mean_neg: f64,
    /// From the mean positive and negative inner products.
    pub margin: f64,
    pub rel_bias: f64,
    /// From the trimmed extremes.
    pub margin_q: f64,
    pub rel_bias_q: f64,
    pub xi: f64,
    pub mean_norms: f64,
    pub norm_mean: f64,
    pub xi_random_baseline: f64,
    pub separable: bool,
    pub retrieval_u2v: f64,
    pub retrieval_v2u: f64,
}

pub fn analyze_embeddings(pair: &PairedConfig, params: &AnalyzeParams) -> Result<AnalysisRow> {
    if pair.count() < 2 {
        return Err(CliError::Shape("analysis needs at least two pairs".into()));
    }
    let stats = gram_stats(pair);
    let trimmed = trimmed_stats(pair, params.trim_q, params.trim_q)?;
    let xi = xi_report(pair, params.seed)?;
    let (margin, rel_bias) = stats.mean_margin_rel_bias().expect("N >= 2");
    let separable = perceptron_separator(&pair.u, &pair.v, params.perceptron_epochs)?.is_separated();
    let nan = f64::NAN;
    Ok(AnalysisRow {
        min_pos: stats.min_pos,
        max_pos: stats.max_pos,
        mean_pos: stats.mean_pos,
        min_neg: stats.min_neg.unwrap_or(nan),
        max_neg: stats.max_neg.unwrap_or(nan),
        mean_neg: stats.mean_neg.unwrap_or(nan),
        margin,
        rel_bias,
        margin_q: trimmed.opt_margin.unwrap_or(nan),
        rel_bias_q: trimmed.opt_rel_bias.unwrap_or(nan),
        xi: xi.xi,
        mean_norms: xi.mean_of_norms,
        norm_mean: xi.norm_of_mean,
        xi_random_baseline: xi.random_baseline,
        separable,
        retrieval_u2v: nn_retrieve(pair, Direction::UToV).success_fraction,
        retrieval_v2u: nn_retrieve(pair, Direction::VToU).success_fraction,
    })
}

/// One row of `trace.csv`.
#[derive(Debug, Serialize)]
struct TraceRow {
    iteration: usize,
    loss: f64,
    t: f64,
    rel_bias: f64,
    margin: f64,
    gap: f64,
}

#[derive(Debug, Serialize)]
struct SweepRbRow {
    rel_bias: f64,
    final_t: f64,
    final_margin: f64,
    final_gap: f64,
    final_loss: f64,
}

#[derive(Debug, Serialize)]
struct BoundsRow {
    margin: f64,
    rel_bias: f64,
    feasible: bool,
    alpha_star: Option<f64>,
    lower_nats: Option<f64>,
    upper_nats: Option<f64>,
    lower_bits: Option<f64>,
    upper_bits: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RetrievalRow {
    direction: Direction,
    success_fraction: f64,
    failures: usize,
    unique: bool,
}

/// Directory and files written by a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e.into()))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::io(&path, e.into()))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("json values serialize");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    fn pair(&mut self, name: &str, pair: &PairedConfig) -> Result<()> {
        let path = self.path(name);
        write_pair(&path, pair)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Runs `experiment`, writing artifacts under `out`.
pub fn execute(experiment: &Experiment, out: &Path) -> Result<RunOutput> {
    experiment.validate()?;
    let start = Instant::now();
    let mut w = Writer::new(out)?;
    let result = match experiment {
        Experiment::Construct(p) => {
            let recipe = constellation_recipe(p.margin, p.rel_bias)?;
            let (pair, params) = build_constellation(p.dim, p.margin, p.rel_bias, p.count, p.seed)?;
            let report = validate_constellation(&pair, params, CONSTRUCT_TOL)?;
            if !report.passed {
                return Err(constellation::Error::ConstructionFailure(format!(
                    "{} constraint(s) violated, min slack {:.3e}",
                    report.violations.len(),
                    report.min_slack
                ))
                .into());
            }
            w.pair(&p.file, &pair)?;
            json!({
                "recipe": recipe,
                "params": params,
                "min_slack": report.min_slack,
                "stats": to_value(&gram_stats(&pair)),
            })
        }
        Experiment::Train(c) | Experiment::TrainMulti(c) => {
            let trace = train(c)?;
            write_trace(&mut w, &trace)?;
            w.pair(EMBEDDINGS_FILE, &trace.final_pair())?;
            train_summary(c, &trace)?
        }
        Experiment::SweepRb(p) => {
            let rows = sweep_fixed_rel_bias(&p.base, &p.values)?;
            let csv_rows: Vec<SweepRbRow> = rows
                .iter()
                .map(|r| SweepRbRow {
                    rel_bias: r.rel_bias,
                    final_t: r.final_inv_temp,
                    final_margin: r.final_margin,
                    final_gap: r.final_gap,
                    final_loss: r.final_loss,
                })
                .collect();
            w.csv(SWEEP_FILE, &csv_rows)?;
            json!({ "rows": rows })
        }
        Experiment::SweepInit(p) => {
            let rows = sweep_init(&p.base, &p.inv_temp, &p.rel_bias)?;
            w.csv(SWEEP_FILE, &rows)?;
            json!({ "rows": rows })
        }
        Experiment::Analyze(p) => {
            let pair = read_pair(&p.input)?.pair;
            let row = analyze_embeddings(&pair, p)?;
            w.csv(ANALYSIS_FILE, &[row])?;
            json!({
                "input": p.input,
                "count": pair.count(),
                "dim": pair.dim(),
                "analysis": row,
                "stats": to_value(&gram_stats(&pair)),
                "xi": xi_report(&pair, p.seed)?,
            })
        }
        Experiment::Bounds(p) => {
            let rows: Vec<BoundsRow> = (0..p.points)
                .map(|i| {
                    let m = p.margin_min + (p.margin_max - p.margin_min) * i as f64 / (p.points - 1) as f64;
                    let (feasible, _) = margin_feasibility(m, p.rel_bias, None);
                    let e = exponent_bounds(m, p.rel_bias).ok();
                    BoundsRow {
                        margin: m,
                        rel_bias: p.rel_bias,
                        feasible,
                        alpha_star: e.map(|e| e.alpha_star),
                        lower_nats: e.map(|e| e.lower_nats),
                        upper_nats: e.map(|e| e.upper_nats),
                        lower_bits: e.map(|e| nats_to_bits(e.lower_nats)),
                        upper_bits: e.map(|e| nats_to_bits(e.upper_nats)),
                    }
                })
                .collect();
            w.csv(BOUNDS_FILE, &rows)?;
            json!({ "points": rows.len(), "feasible_points": rows.iter().filter(|r| r.feasible).count() })
        }
        Experiment::Separate(p) => {
            let pair = read_pair(&p.input)?.pair;
            let stats = gram_stats(&pair);
            let separable = perceptron_separator(&pair.u, &pair.v, 1000)?.is_separated();
            let cert = modality_gap_certificate(&pair)?;
            let strict_negatives = pair
                .v
                .rows()
                .filter(|v| constellation::geometry::dot(&cert.h, v) < -STRICT_TOL)
                .count();
            json!({
                "perceptron_separable": separable,
                "opt_margin": stats.opt_margin,
                "opt_rel_bias": stats.opt_rel_bias,
                "certificate": cert,
                "strict_negatives": strict_negatives,
            })
        }
        Experiment::Retrieve(p) => {
            let pair = read_pair(&p.input)?.pair;
            let reports = [Direction::UToV, Direction::VToU].map(|d| nn_retrieve(&pair, d));
            let rows: Vec<RetrievalRow> = reports
                .iter()
                .map(|r| RetrievalRow {
                    direction: r.direction,
                    success_fraction: r.success_fraction,
                    failures: r.failures.len(),
                    unique: r.unique,
                })
                .collect();
            w.csv(RETRIEVAL_FILE, &rows)?;
            let robustness = match (p.inv_temp, p.bias, p.batch) {
                (Some(t), Some(b), Some(batch)) => Some(robustness_check(&pair, t, b, batch)?),
                _ => None,
            };
            json!({ "retrieval": reports, "robustness": robustness })
        }
        Experiment::Tightness(p) => {
            let pair = match p.eps {
                Some(eps) => tightness_config(p.dim, p.count, eps, p.seed)?,
                None => tightness_config_auto(p.dim, p.count, p.seed)?,
            };
            w.pair(EMBEDDINGS_FILE, &pair)?;
            let cert = modality_gap_certificate(&pair)?;
            json!({
                "strict_sign_pattern": strict_sign_pattern(&pair, STRICT_TOL),
                "stats": to_value(&gram_stats(&pair)),
                "support": cert.support,
                "v_violations": cert.v_violations,
            })
        }
    };
    let summary = json!({
        "verb": experiment.verb().name(),
        "seed": experiment.seed(),
        "config": experiment,
        "parallel": constellation::par::is_parallel(),
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "result": result,
    });
    w.json(SUMMARY_FILE, &summary)?;
    Ok(RunOutput {
        dir: w.dir,
        files: w.files,
    })
}

fn write_trace(w: &mut Writer, trace: &TrainTrace) -> Result<()> {
    let rows: Vec<TraceRow> = trace
        .records
        .iter()
        .map(|r| TraceRow {
            iteration: r.iteration,
            loss: r.loss,
            t: r.inv_temp,
            rel_bias: r.rel_bias,
            margin: r.stats.margin,
            gap: r.stats.gap,
        })
        .collect();
    w.csv(TRACE_FILE, &rows)
}

fn train_summary(config: &TrainConfig, trace: &TrainTrace) -> Result<Value> {
    let last = trace.last();
    let graph = config.graph()?;
    let edges = graph
        .edges()
        .iter()
        .map(|&(a, b)| {
            let pair = trace.final_config.pair(a, b)?;
            Ok(json!({ "edge": [a, b], "summary": EdgeSummary::of_pairs([&pair]) }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "final": last,
        "iterations": trace.step_losses.len(),
        "first_step_below_1e-3": trace.first_step_below(1e-3),
        "edges": edges,
    }))
}
