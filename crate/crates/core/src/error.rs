use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid too small: {nx}x{ny} (need at least 3 nodes per direction)")]
    GridTooSmall { nx: usize, ny: usize },

    #[error("geometry mismatch: expected {expected}, got {found}")]
    GeometryMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("format error: {0}")]
    Format(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
