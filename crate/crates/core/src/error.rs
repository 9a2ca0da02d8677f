use thiserror::Error;

/// Errors raised by the library. The CLI maps the variants onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("conditioning on an event of probability zero: {0}")]
    ZeroProbability(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("unsupported request: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
