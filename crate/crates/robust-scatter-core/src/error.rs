//! Error type shared by every module of the crate.

use alloc::string::String;

/// Failures reported by the estimators, tuning and diagnostics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("scatter matrix is singular or not positive definite")]
    SingularScatter,
    #[error("no observation has positive weight (iteration {iteration})")]
    EmptyActiveSet { iteration: usize },
    #[error("weighted distances sum to zero (iteration {iteration})")]
    DegenerateStep { iteration: usize },
    #[error("tau-scale of column {column} is below 1e-12")]
    DegenerateScale { column: usize },
    #[error("active ratio never reached {target} on the scan range")]
    GridNotFound { target: f64 },
    #[error("eigenvalues {i} and {j} coincide within 1e-10")]
    DegenerateSpectrum { i: usize, j: usize },
    #[error("integral did not converge: {0}")]
    Quadrature(String),
    #[error("refit failed to converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
