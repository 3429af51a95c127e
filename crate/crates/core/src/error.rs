use thiserror::Error;

/// Errors raised by the spectral transport routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid norm: {0}")]
    InvalidNorm(String),

    #[error("unsupported norm for this operation: {0}")]
    UnsupportedNorm(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inputs do not commute: residual {residual:e} exceeds {tolerance:e}")]
    NonCommuting { residual: f64, tolerance: f64 },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("flow diverged at step {step}: objective {objective:e} (initial {initial:e})")]
    Diverged { step: usize, objective: f64, initial: f64 },

    #[error("covariance lost positive semidefiniteness at step {step}: smallest eigenvalue {min_eigenvalue:e}")]
    LostPsd { step: usize, min_eigenvalue: f64 },

    #[error("active matrix regularization floor reached: smallest eigenvalue {0:e}")]
    RegularizationFloor(f64),

    #[error("i/o: {0}")]
    Io(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
