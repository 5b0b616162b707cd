//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible. Both operands are named so the
    /// message is useful without a stack trace.
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// An operation that requires at least one element got none.
    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    /// A token id fell outside the vocabulary it was used with.
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    /// A computation produced NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A parameter or argument failed validation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file or byte stream did not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A generator or sampler could not satisfy its constraints.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: impl Into<String>, rhs: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.into(),
            rhs: rhs.into(),
        }
    }
}
