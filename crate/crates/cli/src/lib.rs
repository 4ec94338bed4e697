//! Command-line front end: configuration parsing, embedding files and
//! experiment execution.

pub mod config;
pub mod embeddings;
pub mod error;
pub mod run;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_document, load_params, Experiment, Verb};
use crate::error::{CliError, Result};
use crate::run::{execute, RunOutput, ERROR_FILE};

#[derive(Debug, Parser)]
#[command(name = "constellation", version, about = "Constellation experiments: construct, train, analyze, certify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an (m, b_rel)-constellation from the explicit recipe.
    Construct(Flags),
    /// Train a pair of embedding sets.
    Train(Flags),
    /// Train k modalities over a synchronization graph.
    TrainMulti(Flags),
    /// Train once per fixed relative bias.
    SweepRb(Flags),
    /// Train over a grid of initial temperatures and relative biases.
    SweepInit(Flags),
    /// Report Gram statistics, xi, separability and retrieval of a pair file.
    Analyze(Flags),
    /// Tabulate the cardinality exponent bounds.
    Bounds(Flags),
    /// Compute a modality-gap certificate for a pair file.
    Separate(Flags),
    /// Nearest-neighbour retrieval and the batch robustness check.
    Retrieve(Flags),
    /// Build a configuration that attains the separation bound.
    Tightness(Flags),
    /// Run a full experiment document (`verb` + `params`).
    Run(Flags),
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// JSON parameters (a full document for `run`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides any seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 forces serial execution.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Embedding file for analyze, separate and retrieve.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

impl Command {
    fn split(&self) -> (Option<Verb>, &Flags) {
        match self {
            Self::Construct(f) => (Some(Verb::Construct), f),
            Self::Train(f) => (Some(Verb::Train), f),
            Self::TrainMulti(f) => (Some(Verb::TrainMulti), f),
            Self::SweepRb(f) => (Some(Verb::SweepRb), f),
            Self::SweepInit(f) => (Some(Verb::SweepInit), f),
            Self::Analyze(f) => (Some(Verb::Analyze), f),
            Self::Bounds(f) => (Some(Verb::Bounds), f),
            Self::Separate(f) => (Some(Verb::Separate), f),
            Self::Retrieve(f) => (Some(Verb::Retrieve), f),
            Self::Tightness(f) => (Some(Verb::Tightness), f),
            Self::Run(f) => (None, f),
        }
    }
}

fn with_input(experiment: &mut Experiment, input: &Path) -> Result<()> {
    match experiment {
        Experiment::Analyze(p) => p.input = input.into(),
        Experiment::Separate(p) => p.input = input.into(),
        Experiment::Retrieve(p) => p.input = input.into(),
        other => {
            return Err(CliError::Config(format!("--input is not used by {}", other.verb().name())));
        }
    }
    Ok(())
}

/// Resolves flags and configuration into an experiment and output directory.
pub fn resolve(command: &Command) -> Result<(Experiment, PathBuf)> {
    let (verb, flags) = command.split();
    let (mut experiment, doc_out) = match verb {
        Some(verb) => match (&flags.input, flags.config.as_deref()) {
            // The input flag may be what makes the defaults valid, so parse leniently first.
            (Some(input), cfg) => {
                let params = match cfg {
                    Some(path) => Some(
                        serde_json::from_str::<serde_json::Value>(
                            &fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
                        )
                        .map_err(|e| CliError::Parse {
                            path: path.into(),
                            reason: e.to_string(),
                        })?,
                    ),
                    None => None,
                };
                let mut params = params.unwrap_or_else(|| serde_json::json!({}));
                if let Some(obj) = params.as_object_mut() {
                    obj.insert("input".into(), serde_json::json!(input));
                }
                (Experiment::from_params(verb, Some(params))?, None)
            }
            (None, cfg) => (load_params(verb, cfg)?, None),
        },
        None => {
            let path = flags
                .config
                .as_deref()
                .ok_or_else(|| CliError::Config("run needs --config".into()))?;
            let loaded = load_document(path)?;
            (loaded.experiment, loaded.out)
        }
    };
    if verb.is_none() {
        if let Some(input) = &flags.input {
            with_input(&mut experiment, input)?;
        }
    }
    if let Some(seed) = flags.seed {
        experiment.set_seed(seed);
    }
    experiment.validate()?;
    let out = flags
        .out
        .clone()
        .or(doc_out)
        .unwrap_or_else(|| PathBuf::from("runs").join(experiment.verb().name()));
    Ok((experiment, out))
}

/// Best guess at the output directory when resolution itself failed.
fn fallback_out(command: &Command) -> Option<PathBuf> {
    command.split().1.out.clone()
}

fn write_error(dir: Option<&Path>, err: &CliError) {
    let report = serde_json::to_string_pretty(&err.report()).expect("error report serializes");
    eprintln!("{report}");
    if let Some(dir) = dir {
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join(ERROR_FILE), report + "\n");
        }
    }
}

/// Runs the parsed command; returns the process exit code.
pub fn run_command(command: &Command) -> i32 {
    let (experiment, out) = match resolve(command) {
        Ok(v) => v,
        Err(e) => {
            write_error(fallback_out(command).as_deref(), &e);
            return e.exit_code();
        }
    };
    let threads = command.split().1.threads;
    let outcome: Result<RunOutput> = constellation::par::with_threads(threads, || execute(&experiment, &out));
    match outcome {
        Ok(output) => {
            let _ = fs::remove_file(output.dir.join(ERROR_FILE));
            for f in &output.files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            write_error(Some(&out), &e);
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_command(&cli.command),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                error::EXIT_CONFIG
            } else {
                0
            }
        }
    }
}
