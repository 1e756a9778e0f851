use thiserror::Error;

use crate::channel::ReadRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no optimal threshold between the level means ({0})")]
    DegenerateEstimate(String),

    #[error("degenerate reads: {0}")]
    DegenerateReads(String),

    #[error("read out of range: {0}")]
    OutOfRange(String),

    #[error("inconsistent reads: {0}")]
    InconsistentReads(String),

    #[error("estimation failed after {} reads: {reason}", .reads.len())]
    EstimationFailed {
        reason: String,
        reads: Vec<ReadRecord>,
    },

    #[error("support mismatch in interval {interval}: p = {p}, p_hat = 0")]
    SupportMismatch { interval: usize, p: f64 },

    #[error("interval {0} has zero probability under both levels")]
    EmptyInterval(usize),

    #[error("observation is inconsistent with the whole prior")]
    InconsistentObservation,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("code construction failed: {0}")]
    Construction(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::sync::Arc<std::io::Error>),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(std::sync::Arc::new(e))
    }
}
