use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("empty input")]
    EmptyInput,

    #[error("{malformed} of {total} rows malformed, exceeds tolerance of {tolerance}")]
    TooManyMalformedRows {
        malformed: usize,
        total: usize,
        tolerance: f64,
    },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("column `{column}`: value `{value}` is not in the encoding map")]
    UnseenCategory { column: String, value: String },

    #[error("column `{column}` row {row}: cannot parse `{value}` as a number")]
    NotNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("not enough rows: need at least {needed}, got {actual}")]
    TooFewRows { needed: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("labels are required: {0}")]
    LabelsRequired(String),

    #[error("value {0} is not a binary label")]
    NonBinary(String),

    #[error("assignment from {0} is not polarity-aligned")]
    Unaligned(String),

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
