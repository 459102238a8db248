use thiserror::Error;

use crate::model::ModelError;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("design points {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },

    #[error("smoothness upsilon = {upsilon} is below 1; rate and bound operations require upsilon >= 1")]
    SmoothnessTooLow { upsilon: f64 },

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite: pivot {pivot:e} at row {index} (jitter {jitter:e})")]
    Conditioning { index: usize, pivot: f64, jitter: f64 },

    #[error("native-space elements use different kernels")]
    KernelMismatch,

    #[error("computed variance {value:e} is negative beyond tolerance {tolerance:e}")]
    NegativeVariance { value: f64, tolerance: f64 },

    #[error("model evaluation failed: {0}")]
    Model(#[from] ModelError),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("slope fit failed: {0}")]
    SlopeFit(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by finite-precision linear algebra rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning { .. }
                | Error::NegativeVariance { .. }
                | Error::Model(_)
                | Error::Calibration(_)
                | Error::SlopeFit(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
