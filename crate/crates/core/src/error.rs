use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix that must be strictly positive definite is singular or
    /// numerically indistinguishable from singular.
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// A dataset file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_input(message: impl Into<String>) -> Error {
    Error::InvalidInput(message.into())
}
