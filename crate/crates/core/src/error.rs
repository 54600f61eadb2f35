use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A value violates a documented invariant; the message names it.
    #[error("invalid parameter: {0}")]
    Invalid(String),

    /// Malformed input (config text, bitstring literal, override syntax).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("fixed-point iteration did not settle within {0} steps")]
    NoFixedPoint(usize),

    #[error("singular linear system")]
    Singular,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
