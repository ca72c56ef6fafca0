//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A token position that does not exist in the grid.
    #[error("invalid position: line {line}, token {token}")]
    Position { line: usize, token: usize },

    /// NaN or infinity produced where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// An argument or configuration value outside its contract.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// A backward pass against parameters that changed since the forward pass.
    #[error("stale tape: parameters changed since the forward pass")]
    StaleTape,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
