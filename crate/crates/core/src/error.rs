use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Network,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("data leakage: source years {source_start}-{source_end} overlap evaluation years {eval_start}-{eval_end}")]
    Leakage {
        source_start: i32,
        source_end: i32,
        eval_start: i32,
        eval_end: i32,
    },

    #[error("network request to {url} failed (retryable: {retryable}): {message}")]
    Network {
        url: String,
        retryable: bool,
        message: String,
    },

    #[error("no data for location ({latitude}, {longitude}): {message}")]
    NoDataForLocation {
        latitude: f64,
        longitude: f64,
        message: String,
    },

    #[error("malformed response: field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("{path}: row {row}: {message}")]
    Csv { path: PathBuf, row: usize, message: String },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing months: {}", .0.join(", "))]
    MissingMonths(Vec<String>),

    #[error("channel `{0}` is constant over the fitting data")]
    ConstantChannel(String),

    #[error("channel `{0}` has no fitted scaler")]
    UnfittedChannel(String),

    #[error("missing data at {0}")]
    MissingHour(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch")]
    Checksum,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Leakage { .. } => ErrorClass::Config,
            Error::Network { .. } => ErrorClass::Network,
            Error::Shape(_) | Error::NonFinite(_) | Error::Divergence { .. } => ErrorClass::Numerical,
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Data,
        }
    }

    /// Whether retrying the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Network { retryable: true, .. })
    }
}
