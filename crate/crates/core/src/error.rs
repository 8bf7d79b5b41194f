//! Crate-wide error type.

use crate::timeseries::Month;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("series too short: need at least {needed} observations, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("missing value at {0} where a complete series is required")]
    MissingValue(Month),

    #[error("non-positive value {value} at {month}: log transform requires strictly positive input")]
    NonPositive { month: Month, value: f64 },

    #[error("lag {lag} out of range for series of length {len}")]
    LagOutOfRange { lag: usize, len: usize },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("zero-variance column `{0}`")]
    ZeroVariance(String),

    #[error("no festival date for year {0} in the lunar table")]
    YearNotInTable(i32),

    #[error("anchor {anchor} outside series span {start}..{end}")]
    AnchorOutOfRange {
        anchor: Month,
        start: Month,
        end: Month,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),

    #[error("ill-conditioned regression: {0}")]
    IllConditioned(String),

    #[error("series spans do not match: {0}")]
    SpanMismatch(String),

    #[error("decomposition mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("malformed CSV at {path}: {detail}")]
    Csv { path: String, detail: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad input data rather than numerical failure.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::NonConvergence(_) | Error::IllConditioned(_)
        )
    }
}
