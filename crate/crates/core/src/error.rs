//! Crate-wide error type.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by simulation, regression, training and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument failed validation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A vector or matrix had the wrong length.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A NaN or infinity showed up where only finite values are allowed.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A regression cell was skipped during training and cannot be read.
    #[error("cell (level {level}, epoch {epoch}) was skipped during training")]
    SkippedCell { level: usize, epoch: usize },

    /// Training and test paths were generated from the same seed.
    #[error("training and test path sets share seed {0}")]
    SeedCollision(u64),

    /// A basis family name was not recognised.
    #[error("unknown basis family `{0}`")]
    UnknownBasis(String),

    /// Underlying I/O failure while reading or writing files.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A stored artifact could not be encoded or decoded.
    #[error("serialization: {0}")]
    Serialization(String),
}
