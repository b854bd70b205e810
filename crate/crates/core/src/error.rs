use thiserror::Error;

/// Errors raised by the key-rate library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Gram matrix is numerically singular (min eigenvalue {min_eigenvalue:e} < {floor:e})")]
    SingularGram { min_eigenvalue: f64, floor: f64 },

    #[error("Fock truncation n_max = {n_max} too small, need at least {required}")]
    TruncationTooSmall { n_max: usize, required: usize },

    #[error("integration grid inadequate: boundary value {boundary:e} exceeds {limit:e}")]
    GridInadequate { boundary: f64, limit: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("output error: {0}")]
    Output(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidParameter(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
