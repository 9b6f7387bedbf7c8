//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::dataset::MonthKey;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside its admissible domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("division undefined: {0}")]
    DivisionUndefined(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    /// CSV header does not match the canonical column set.
    #[error("schema error: column `{column}` {problem}")]
    Schema {
        column: String,
        problem: &'static str,
    },

    #[error("continuity error: missing month {missing} (after {after})")]
    Continuity { after: MonthKey, missing: MonthKey },

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("correlation undefined: {0} has zero variance")]
    UndefinedCorrelation(&'static str),

    #[error("model selection failed: {0}")]
    Selection(String),

    #[error("aggregation failed: {0}")]
    Aggregate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
