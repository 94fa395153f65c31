//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The reorthogonalization loop failed to stabilize within the pass
    /// budget; the iteration cannot continue safely.
    #[error("reorthogonalization did not stabilize after {passes} passes at step {step}")]
    ReorthLimit { step: usize, passes: usize },

    #[error("zero-norm wave function")]
    ZeroNorm,

    #[error("integration step underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eig(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    /// A hopping amplitude `j_n = |b_n c_n|^{1/2}` vanished inside the
    /// requested window (indicates an upstream breakdown).
    #[error("vanishing hopping amplitude j_{index}")]
    ZeroHopping { index: usize },

    #[error("empty fit window")]
    EmptyFitWindow,

    #[error("fit did not converge (best objective {objective:.3e}, best params {params:?})")]
    FitDiverged { params: Vec<f64>, objective: f64 },

    #[error("curve for L = {l} has no sign change in range")]
    NoSignChange { l: usize },

    #[error("curve for L = {l} crosses zero more than once")]
    MultipleSignChanges { l: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("result store has schema version {found}, this build reads version {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("aggregation over zero successful records")]
    NoRecords,

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
