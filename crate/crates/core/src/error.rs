use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed, missing or unusable input data.
    Data,
    /// The numerical procedure failed on otherwise valid data.
    Numerical,
    /// Filesystem or stream failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample: {value}")]
    InvalidSample { value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("responsibility undefined at sample {index}")]
    ResponsibilityUndefined { index: usize },

    #[error("empty component {component} at iteration {iteration}")]
    EmptyComponent { component: usize, iteration: usize },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),

    #[error("series too short: length {len}")]
    SeriesTooShort { len: usize },

    #[error("non-positive value {value} at index {index}")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("timestamps not strictly increasing at index {index}")]
    UnorderedTimestamps { index: usize },

    #[error("missing or unparseable cell at row {row}, column '{column}'")]
    BadCell { row: usize, column: String },

    #[error("duplicate entry for key '{key}' at timestamp {timestamp}")]
    DuplicateEntry { key: String, timestamp: String },

    #[error("timestamp mismatch between '{left}' and '{right}' at position {position}")]
    TimestampMismatch {
        left: String,
        right: String,
        position: usize,
    },

    #[error("unknown key '{0}'")]
    UnknownKey(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ResponsibilityUndefined { .. } | Error::EmptyComponent { .. } => {
                ErrorKind::Numerical
            }
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            _ => ErrorKind::Data,
        }
    }
}
