//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Matrix / image shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Two artifacts (codebook, mask, estimate) were produced under
    /// incompatible configurations and must not be mixed.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    /// An input collection that must be non-empty is empty.
    #[error("empty input: {0}")]
    Empty(String),

    /// A file payload does not conform to its declared format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
