use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: feature index {index} exceeds dimension {dim}")]
    IndexExceedsDim { line: usize, index: usize, dim: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("operation on an empty set of points")]
    EmptySubset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point {0} is out of range")]
    OutOfRange(usize),

    #[error("point {0} is already deleted")]
    AlreadyDeleted(usize),

    #[error("point {0} listed more than once")]
    DuplicateId(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite parameters after iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("training did not converge: gradient norm {grad_norm:e} above gate {gate:e}")]
    NotConverged { grad_norm: f64, gate: f64 },

    #[error("row {row} has norm {norm} > 1; normalize the dataset first")]
    NotNormalized { row: usize, norm: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("quasi-Newton history is empty")]
    EmptyHistory,

    #[error("trajectory does not match: {0}")]
    TrajectoryMismatch(String),

    #[error("class {class} exhausted after {drawn} of {requested} deletions")]
    ClassExhausted { class: u32, drawn: usize, requested: usize },

    #[error("unlearning time must be positive")]
    ZeroDuration,

    #[error("estimator calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NotConverged { .. }
                | Error::Calibration(_)
        )
    }
}
