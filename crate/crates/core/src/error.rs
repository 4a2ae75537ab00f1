use thiserror::Error;

/// Errors raised across the planner, learner, and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed argument supplied by a caller (distinct from a negative answer).
    #[error("invalid input: {0}")]
    Input(String),

    /// A documented precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Configuration is inconsistent or references something that does not exist.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("problem generation failed: {0}")]
    Generation(String),

    #[error("training diverged at batch {batch}: {reason}")]
    Training { batch: usize, reason: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
