use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance matrix is not positive definite")]
    SingularCovariance,
    #[error("precision matrix is not invertible")]
    SingularPrecision,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("particle weights are degenerate (zero sum or non-finite)")]
    DegenerateWeights,
    #[error("jacobian contains non-finite entries")]
    NonFiniteJacobian,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("unknown algorithm: {0}")]
    UnknownAlgorithm(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("quadrature did not reach tolerance {tol:e} (estimate {estimate})")]
    ToleranceNotMet { tol: f64, estimate: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures that originate in the numerics rather than in user input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance
                | Error::SingularPrecision
                | Error::DegenerateWeights
                | Error::NonFiniteJacobian
                | Error::ToleranceNotMet { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
