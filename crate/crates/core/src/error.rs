use alloc::string::String;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A distribution or procedure parameter is outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data has the wrong shape or violates a structural requirement.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cholesky factorization hit a pivot below the positive-definiteness threshold.
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// An iterative solver did not meet its tolerance within the iteration budget.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The least-squares residual variance is zero to working precision.
    #[error("degenerate fit: residual variance {tau2:e} is zero to working precision")]
    DegenerateFit { tau2: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid_param {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}

macro_rules! invalid_input {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidInput(alloc::format!($($arg)*))
    };
}

pub(crate) use invalid_input;
pub(crate) use invalid_param;
