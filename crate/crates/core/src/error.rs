//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by state construction, linear algebra and the protocol
/// engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown register `{0}`")]
    UnknownRegister(String),

    #[error("ambiguous register `{0}`: label appears more than once")]
    AmbiguousRegister(String),

    #[error("not a valid state vector: {0}")]
    InvalidStateVector(String),

    #[error("not a valid density operator: {0}")]
    InvalidDensityOperator(String),

    #[error("not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("not a valid POVM: {0}")]
    InvalidPovm(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("sampling failed: {0}")]
    SamplingFailed(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
