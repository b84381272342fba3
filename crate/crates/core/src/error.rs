use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid configuration: {0}")]
    InvalidGrid(String),

    #[error("field defined on a different grid: {0}")]
    GridMismatch(String),

    #[error("non-finite value in field at flat index {0}")]
    NonFinite(usize),

    #[error("matrix field not Hermitian within tolerance (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("density validation failed: {0}")]
    InvalidDensity(String),

    #[error("cone violation beyond tolerance: {0}")]
    ConeViolation(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("field format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
