use thiserror::Error;

/// Errors raised by the estimation pipeline and its I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A factorization or solve failed even after diagonal jitter.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An eigenvalue required for division fell below the relative floor.
    #[error("truncation: eigenvalue #{index} = {value:e} is below floor {floor:e}")]
    Truncation { index: usize, value: f64, floor: f64 },

    /// Malformed data or model file.
    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn num(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
