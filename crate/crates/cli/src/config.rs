//! Experiment configuration documents.
//!
//! A full document names the verb and carries its parameters:
//!
//! ```json
//! { "verb": "sweep-rb", "out": "runs/t5", "seed": 0, "params": { "values": [0.0, 0.5] } }
//! ```
//!
//! Verb subcommands read the `params` object alone. Every object rejects
//! unknown keys, and the whole document is parsed before anything runs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use constellation::optimizer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Verb {
    Construct,
    Train,
    TrainMulti,
    SweepRb,
    SweepInit,
    Analyze,
    Bounds,
    Separate,
    Retrieve,
    Tightness,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Self::Construct => "construct",
            Self::Train => "train",
            Self::TrainMulti => "train-multi",
            Self::SweepRb => "sweep-rb",
            Self::SweepInit => "sweep-init",
            Self::Analyze => "analyze",
            Self::Bounds => "bounds",
            Self::Separate => "separate",
            Self::Retrieve => "retrieve",
            Self::Tightness => "tightness",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    verb: Verb,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructParams {
    pub dim: usize,
    pub margin: f64,
    pub rel_bias: f64,
    pub count: usize,
    pub seed: u64,
    /// Output file name inside the run directory; `.csv` selects CSV.
    pub file: String,
}

impl Default for ConstructParams {
    fn default() -> Self {
        Self {
            dim: 12,
            margin: 0.1,
            rel_bias: 0.0,
            count: 8,
            seed: 0,
            file: "final_embeddings.cnst".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRbParams {
    pub base: TrainConfig,
    pub values: Vec<f64>,
}

impl Default for SweepRbParams {
    fn default() -> Self {
        Self {
            base: TrainConfig::default(),
            values: (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepInitParams {
    pub base: TrainConfig,
    pub inv_temp: Vec<f64>,
    pub rel_bias: Vec<f64>,
}

impl Default for SweepInitParams {
    fn default() -> Self {
        Self {
            base: TrainConfig::default(),
            inv_temp: vec![1.0, 3.0, 10.0, 30.0, 100.0],
            rel_bias: (0..=10).map(|i| -1.0 + 0.2 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeParams {
    pub input: PathBuf,
    /// Fraction trimmed from each tail before taking `min_pos` / `max_neg`.
    pub trim_q: f64,
    pub seed: u64,
    pub perceptron_epochs: usize,
}

impl Default for AnalyzeParams {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            trim_q: 0.01,
            seed: 0,
            perceptron_epochs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsParams {
    pub rel_bias: f64,
    pub margin_min: f64,
    pub margin_max: f64,
    pub points: usize,
}

impl Default for BoundsParams {
    fn default() -> Self {
        Self {
            rel_bias: 0.0,
            margin_min: 0.01,
            margin_max: 0.3,
            points: 30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparateParams {
    pub input: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieveParams {
    pub input: PathBuf,
    /// With all three set, the batch robustness check runs as well.
    pub inv_temp: Option<f64>,
    pub bias: Option<f64>,
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TightnessParams {
    pub dim: usize,
    pub count: usize,
    /// Mixing weight; omitted means the first of 1e-2, 1e-3, 1e-4 that works.
    pub eps: Option<f64>,
    pub seed: u64,
}

impl Default for TightnessParams {
    fn default() -> Self {
        Self {
            dim: 5,
            count: 7,
            eps: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verb", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    Construct(ConstructParams),
    Train(TrainConfig),
    TrainMulti(TrainConfig),
    SweepRb(SweepRbParams),
    SweepInit(SweepInitParams),
    Analyze(AnalyzeParams),
    Bounds(BoundsParams),
    Separate(SeparateParams),
    Retrieve(RetrieveParams),
    Tightness(TightnessParams),
}

impl Experiment {
    /// Parses `params` for `verb`; `None` takes every default.
    pub fn from_params(verb: Verb, params: Option<serde_json::Value>) -> Result<Self> {
        fn parse<T: for<'de> Deserialize<'de> + Default>(v: Option<serde_json::Value>) -> Result<T> {
            match v {
                None => Ok(T::default()),
                Some(v) => serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string())),
            }
        }
        let exp = match verb {
            Verb::Construct => Self::Construct(parse(params)?),
            Verb::Train => Self::Train(parse(params)?),
            Verb::TrainMulti => Self::TrainMulti(parse(params)?),
            Verb::SweepRb => Self::SweepRb(parse(params)?),
            Verb::SweepInit => Self::SweepInit(parse(params)?),
            Verb::Analyze => Self::Analyze(parse(params)?),
            Verb::Bounds => Self::Bounds(parse(params)?),
            Verb::Separate => Self::Separate(parse(params)?),
            Verb::Retrieve => Self::Retrieve(parse(params)?),
            Verb::Tightness => Self::Tightness(parse(params)?),
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn verb(&self) -> Verb {
        match self {
            Self::Construct(_) => Verb::Construct,
            Self::Train(_) => Verb::Train,
            Self::TrainMulti(_) => Verb::TrainMulti,
            Self::SweepRb(_) => Verb::SweepRb,
            Self::SweepInit(_) => Verb::SweepInit,
            Self::Analyze(_) => Verb::Analyze,
            Self::Bounds(_) => Verb::Bounds,
            Self::Separate(_) => Verb::Separate,
            Self::Retrieve(_) => Verb::Retrieve,
            Self::Tightness(_) => Verb::Tightness,
        }
    }

    /// The seed recorded in the parameters, if the verb uses one.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Construct(p) => Some(p.seed),
            Self::Train(c) | Self::TrainMulti(c) => Some(c.seed),
            Self::SweepRb(p) => Some(p.base.seed),
            Self::SweepInit(p) => Some(p.base.seed),
            Self::Analyze(p) => Some(p.seed),
            Self::Tightness(p) => Some(p.seed),
            Self::Bounds(_) | Self::Separate(_) | Self::Retrieve(_) => None,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::Construct(p) => p.seed = seed,
            Self::Train(c) | Self::TrainMulti(c) => c.seed = seed,
            Self::SweepRb(p) => p.base.seed = seed,
            Self::SweepInit(p) => p.base.seed = seed,
            Self::Analyze(p) => p.seed = seed,
            Self::Tightness(p) => p.seed = seed,
            Self::Bounds(_) | Self::Separate(_) | Self::Retrieve(_) => {}
        }
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let need_input = |p: &Path| {
            if p.as_os_str().is_empty() {
                bad("`input` is required".into())
            } else {
                Ok(())
            }
        };
        match self {
            Self::Construct(p) => {
                if p.count == 0 || p.file.is_empty() {
                    return bad("construct needs count >= 1 and a file name".into());
                }
                constellation::constructions::constellation_recipe(p.margin, p.rel_bias)?;
            }
            Self::Train(c) => {
                c.validate()?;
                if c.modalities != 2 {
                    return bad("train expects two modalities; use train-multi".into());
                }
            }
            Self::TrainMulti(c) => c.validate()?,
            Self::SweepRb(p) => {
                p.base.validate()?;
                if p.values.is_empty() {
                    return bad("sweep-rb needs at least one value".into());
                }
            }
            Self::SweepInit(p) => {
                p.base.validate()?;
                if p.inv_temp.is_empty() || p.rel_bias.is_empty() {
                    return bad("sweep-init needs non-empty grids".into());
                }
                if let Some(t) = p.inv_temp.iter().find(|&&t| !(t > 0.0)) {
                    return bad(format!("initial inverse temperature must be positive, got {t}"));
                }
            }
            Self::Analyze(p) => {
                need_input(&p.input)?;
                if !(0.0..0.5).contains(&p.trim_q) {
                    return bad(format!("trim_q must lie in [0, 0.5), got {}", p.trim_q));
                }
            }
            Self::Bounds(p) => {
                if p.points < 2 || !(p.margin_min < p.margin_max) {
                    return bad("bounds needs points >= 2 and margin_min < margin_max".into());
                }
            }
            Self::Separate(p) => need_input(&p.input)?,
            Self::Retrieve(p) => {
                need_input(&p.input)?;
                let set = [p.inv_temp.is_some(), p.bias.is_some(), p.batch.is_some()];
                if set.iter().any(|&s| s) && !set.iter().all(|&s| s) {
                    return bad("inv_temp, bias and batch must be given together".into());
                }
            }
            Self::Tightness(p) => {
                if p.dim < 3 || p.count < p.dim + 1 {
                    return bad("tightness needs dim >= 3 and count >= dim + 1".into());
                }
            }
        }
        Ok(())
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub experiment: Experiment,
    pub out: Option<PathBuf>,
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// Reads a full document naming its verb.
pub fn load_document(path: &Path) -> Result<Loaded> {
    let doc: Document = serde_json::from_value(read_json(path)?).map_err(|e| CliError::Config(e.to_string()))?;
    let mut experiment = Experiment::from_params(doc.verb, doc.params)?;
    if let Some(seed) = doc.seed {
        experiment.set_seed(seed);
    }
    Ok(Loaded { experiment, out: doc.out })
}

/// Reads the `params` object of a single verb.
pub fn load_params(verb: Verb, path: Option<&Path>) -> Result<Experiment> {
    let params = path.map(read_json).transpose()?;
    Experiment::from_params(verb, params)
}
