use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("replay index {index} is not stored (stored range {oldest}..{end})")]
    NotStored { index: u64, oldest: u64, end: u64 },

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("index {index} is not a valid {n}-step start")]
    InvalidNStepIndex { index: u64, n: usize },

    #[error("no sampleable index for horizon {n}")]
    NoValidIndices { n: usize },

    #[error("sum tree has zero total priority")]
    EmptyMeasure,

    #[error("query {u} outside [0, {total})")]
    QueryOutOfRange { u: f64, total: f64 },

    #[error("invalid priority {0}")]
    InvalidPriority(f64),

    #[error("observation has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("tabular approximator requires a one-hot observation")]
    NotOneHot,

    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },

    #[error("step called on a finished episode without reset")]
    EpisodeFinished,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("length mismatch: {what} has {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no environments in common between compared score tables")]
    NoCommonEnvironments,

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("dataset parse error at record {record}: {message}")]
    Dataset { record: usize, message: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
