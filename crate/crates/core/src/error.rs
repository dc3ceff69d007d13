use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("day {day} is outside the valid range {min}..={max}")]
    DayOutOfRange { day: usize, min: usize, max: usize },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: region `{region}` is not listed in the regions file")]
    UnknownRegion { path: PathBuf, region: String },

    #[error("inconsistent data for region `{region}` on {date} (day {day}): {message}")]
    DataConsistency {
        region: String,
        date: chrono::NaiveDate,
        day: usize,
        message: String,
    },

    #[error("region `{region}` has no rows in {series}")]
    MissingSeries { region: String, series: &'static str },

    #[error("invalid region hierarchy: {0}")]
    Hierarchy(String),

    #[error("no child records available to aggregate into level `{0}`")]
    EmptyAggregation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("undefined MAPE: actual counts over the interval sum to zero")]
    UndefinedDenominator,

    #[error("training diverged at iteration {iteration}: non-finite negative log-likelihood")]
    Diverged { iteration: usize },

    #[error("dates {first}..={last} are outside the observed history {history_first}..={history_last}")]
    DatesOutOfHistory {
        first: chrono::NaiveDate,
        last: chrono::NaiveDate,
        history_first: chrono::NaiveDate,
        history_last: chrono::NaiveDate,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad user input (files, flags, data)
    /// rather than from the model itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::Diverged { .. } | Error::Domain(_) | Error::UndefinedDenominator
        )
    }
}
