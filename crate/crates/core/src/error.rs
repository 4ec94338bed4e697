use thiserror::Error;

/// Errors raised by the library. Variants are shared across modules so that
/// callers (notably the CLI) can map them onto exit codes in one place.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("row {0} has (near) zero norm and cannot be projected onto the sphere")]
    ZeroVector(usize),

    #[error("shape mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid quantile {0}; expected a value in [0, 0.5)")]
    InvalidQuantile(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inverse temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("invalid batch size {batch} for {count} pairs")]
    InvalidBatch { batch: usize, count: usize },

    #[error("synchronization graph edge ({0}, {1}) is invalid for {2} modalities")]
    BadEdge(usize, usize, usize),

    #[error("simplex needs k >= 2 vertices, got {0}")]
    InvalidK(usize),

    #[error("delta must lie in the admissible range, got {0}")]
    InvalidDelta(f64),

    #[error("lift parameters violate delta^2 + phi^2 <= 1 (delta = {delta}, phi = {phi})")]
    InvalidLift { delta: f64, phi: f64 },

    #[error("adapter direction w is not a unit vector (norm {0})")]
    NonUnitW(f64),

    #[error("parameters (m = {margin}, b_rel = {rel_bias}) are infeasible: {reason}")]
    InfeasibleParams {
        margin: f64,
        rel_bias: f64,
        reason: String,
    },

    #[error("spherical code sampler stopped after {accepted} accepted points (target {target})")]
    TargetUnreachable {
        accepted: usize,
        target: usize,
        /// The partial code, row-major with `dim` columns.
        partial: Vec<f64>,
        dim: usize,
    },

    #[error("construction failed: {0}")]
    ConstructionFailure(String),

    #[error("iterative solver did not converge: {0}")]
    SolverFailure(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("no strictly positive functional found: {0}")]
    Infeasible(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    DivergenceDetected { iteration: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
