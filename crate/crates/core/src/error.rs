use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("invalid schema {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("no data rows")]
    NoDataRows,

    #[error("label column `{0}` missing from header")]
    MissingLabelColumn(String),

    #[error("row {row}: label `{token}` matches neither class")]
    UnknownLabel { row: usize, token: String },

    #[error("row {row}, column `{column}`: `{token}` is not numeric")]
    NonNumeric {
        row: usize,
        column: String,
        token: String,
    },

    #[error("{0}")]
    InvalidSplit(String),

    #[error("empty bootstrap sample")]
    EmptySample,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("non-finite value in {stage}")]
    NonFinite { stage: &'static str },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("all combination weights are zero")]
    ZeroWeights,

    #[error("empty input")]
    EmptyInput,

    #[error("empty grid")]
    EmptyGrid,

    #[error("repetition {repetition}: {source}")]
    Repetition {
        repetition: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported model version {0}")]
    ModelVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
