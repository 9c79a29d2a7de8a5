use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by dataset ingestion, configuration checks and the selection engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative fixed feature at row {row}, column {col}: {value}")]
    NegativeFixedFeature { row: usize, col: usize, value: f64 },

    #[error("probability row {row}: row sum {sum} exceeds tolerance")]
    ProbabilityRowSum { row: usize, sum: f64 },

    #[error("probability row {row} has negative entry {value}")]
    NegativeProbability { row: usize, value: f64 },

    #[error("label {label} at row {row} out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("candidate {0} is already selected")]
    AlreadySelected(usize),

    #[error("candidate {0} is not in the selection pool")]
    NotInPool(usize),

    #[error("selection capacity {0} exceeded")]
    CapacityExceeded(usize),

    #[error("duplicate index {0} in sequence")]
    DuplicateIndex(usize),

    #[error("instance too large for brute force: {0}")]
    InstanceTooLarge(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input (files, configuration) rather than engine faults.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::NonFinite(_))
    }
}
