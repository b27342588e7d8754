use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by loading, training and evaluating MBKL models.
#[derive(Debug, Error)]
pub enum MbklError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("row {row}, column {column}: {msg}")]
    Csv { row: usize, column: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("class {class:?} has {count} samples, fewer than the {folds} folds requested")]
    TooFewSamples {
        class: String,
        count: usize,
        folds: usize,
    },

    #[error("class {0} is absent from the labels")]
    MissingClass(usize),

    #[error("labels contain a single class; both +1 and -1 are required")]
    SingleClass,

    #[error("invalid label {0}: expected +1 or -1")]
    InvalidLabel(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step 1 discarded every stump (all kernel weights are zero)")]
    EmptyBank,

    #[error("gram matrix of {n} samples exceeds the limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("model file: {0}")]
    Format(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, MbklError>;

impl MbklError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MbklError::Io {
            path: path.into(),
            source,
        }
    }
}
