//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dim(String),

    #[error("ill-conditioned matrix: condition number {cond:.3e} exceeds the allowed limit")]
    IllConditioned { cond: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
