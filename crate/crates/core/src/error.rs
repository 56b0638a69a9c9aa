use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("combined dimension {dim} exceeds the maximum of {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix has eigenvalue {eigenvalue:e} outside the admissible range {range}")]
    Spectrum { eigenvalue: f64, range: &'static str },

    #[error("trace {trace:e} is not one")]
    TraceNotOne { trace: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("postselection probability numerically zero (N = {n:e})")]
    PostselectionZero { n: f64 },

    #[error("output identically zero at this order: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
