//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: rejected before any numerics run. Exit code 2.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Root finding failed or produced a suspect spectrum.
    #[error("spectrum solver: {0}")]
    Solver(String),

    /// Mode identity could not be followed between nearby geometries.
    #[error("mode tracking: {0}")]
    Tracking(String),

    /// Finite-difference stencil outside its trust region.
    #[error("coupling stencil: {0}")]
    Stencil(String),

    /// Integration blew up or violated a conservation contract.
    #[error("integration: {0}")]
    Numerical(String),

    /// Two series cannot be compared point by point.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for validation, 3 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::GridMismatch(_) => 2,
            _ => 3,
        }
    }
}
