use std::io;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by the pipeline stage that raises them; `exit_code`
/// maps them onto the command-line exit status convention.
#[derive(Debug, Error)]
pub enum Error {
    // ingestion
    #[error("csv header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("dates must be strictly increasing: {date} at position {index} does not follow {previous}")]
    UnorderedDates {
        index: usize,
        previous: NaiveDate,
        date: NaiveDate,
    },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("splitting {len} points at ratio {ratio} leaves an empty partition")]
    EmptyPartition { len: usize, ratio: f64 },

    // preprocessing / indicators
    #[error("degenerate scaler: every value equals {0}")]
    DegenerateScaler(f64),
    #[error("insufficient data: need more than {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("period {period} is invalid for a series of length {len}")]
    InvalidPeriod { period: usize, len: usize },
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    // numerics
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix of shape {rows}x{cols} needs {expected} values, got {got}")]
    BadLength {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("actual price is zero on {0}")]
    ZeroActual(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("numeric failure: {0}")]
    Numeric(String),

    // persistence
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid model bundle: {0}")]
    InvalidBundle(String),

    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidRatio(_) | Error::UnknownFeature(_) => 1,
            Error::Numeric(_) | Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}
