use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

/// Process exit code for invalid configuration or input files.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for numerical failures during a run.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("malformed embedding data: {0}")]
    Shape(String),

    #[error("{count} row(s) of {side} are not unit vectors (largest norm deviation {worst:.3e})")]
    NonUnitRows { side: char, count: usize, worst: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] constellation::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use constellation::Error as E;
        match self {
            Self::Config(_) => "config",
            Self::Parse { .. } => "parse",
            Self::Shape(_) => "shape",
            Self::NonUnitRows { .. } => "non_unit_rows",
            Self::Io { .. } => "io",
            Self::Core(e) => match e {
                E::DivergenceDetected { .. } => "divergence",
                E::SolverFailure(_) => "solver_failure",
                E::NumericalDegeneracy(_) => "numerical_degeneracy",
                E::Infeasible(_) => "infeasible",
                E::ConstructionFailure(_) => "construction_failure",
                E::TargetUnreachable { .. } => "target_unreachable",
                E::ZeroVector(_) => "zero_vector",
                E::PreconditionViolated(_) => "precondition",
                E::InvalidBatch { .. } => "invalid_batch",
                _ => "invalid_parameter",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        use constellation::Error as E;
        match self {
            Self::Core(
                E::DivergenceDetected { .. }
                | E::SolverFailure(_)
                | E::NumericalDegeneracy(_)
                | E::Infeasible(_)
                | E::ConstructionFailure(_)
                | E::TargetUnreachable { .. }
                | E::ZeroVector(_),
            ) => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

/// Machine-readable failure record written as `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
}
