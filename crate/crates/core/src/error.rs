use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcsError {
    /// Malformed data: dimension mismatch, non-finite entries, bad ranges.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A configuration value violates its precondition (e.g. delta <= 0).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// An iterative routine diverged or failed to converge.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QcsError {
    fn from(e: std::io::Error) -> Self {
        QcsError::Io(e.to_string())
    }
}

impl From<csv::Error> for QcsError {
    fn from(e: csv::Error) -> Self {
        QcsError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for QcsError {
    fn from(e: serde_json::Error) -> Self {
        QcsError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QcsError>;

pub(crate) fn invalid_input<T>(msg: impl Into<String>) -> Result<T> {
    Err(QcsError::InvalidInput(msg.into()))
}

pub(crate) fn invalid_config<T>(msg: impl Into<String>) -> Result<T> {
    Err(QcsError::InvalidConfig(msg.into()))
}
