//! Error type shared across the pipeline.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum TerraError {
    /// An argument fell outside the domain an operation is defined on.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative numeric routine exhausted its iteration budget.
    #[error("failed to converge: {0}")]
    Convergence(String),

    /// A matrix factorization or solve failed.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// A model or dataset file could not be encoded or decoded.
    #[error("serialization failure: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, TerraError>;
