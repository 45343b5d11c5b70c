use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("covariance matrix is not strictly positive definite (Cholesky pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("kernel degree {0} exceeds the supported maximum of 6")]
    UnsupportedDegree(usize),

    #[error("sample size {n} is smaller than required ({required})")]
    InsufficientSample { n: usize, required: usize },

    #[error("Bernoulli sampling selected no tuples")]
    EmptySelection,

    #[error("hypothesis is singular at the true covariance (zero limiting variance)")]
    SingularHypothesis,

    #[error("plug-in Wald normalizer is not positive")]
    UndefinedStudentizer,

    #[error("studentizer estimate is not positive")]
    DegenerateStudentizer,

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("exceeded {0} redraws of the Bernoulli design")]
    RedrawBudgetExceeded(usize),

    #[error("need at least {required} values, got {found}")]
    TooFewValues { required: usize, found: usize },
}
