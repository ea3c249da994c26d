use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("invalid price series: {0}")]
    InvalidSeries(String),

    #[error("empty price series")]
    EmptySeries,

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        value: f64,
    },

    #[error("date intersection across assets is empty")]
    EmptyIntersection,

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("asset {index} has zero volatility")]
    ZeroVolatility { index: usize },

    #[error("matrix is not positive semidefinite (pivot {pivot} = {value:e})")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric (|a[{row}][{col}] - a[{col}][{row}]| = {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("optimizer did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("grid oracle supports at most {max} assets, got {got}")]
    TooManyAssets { max: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown ticker {0}")]
    UnknownTicker(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
