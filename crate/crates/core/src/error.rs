use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rhs evaluated at singular point z = {z} (singularity {index})")]
    EvaluationAtSingularity { z: Complex64, index: usize },

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid system: {0}")]
    Validation(String),

    #[error("path passes within {clearance:e} of singularity {index} (minimum {minimum:e})")]
    PathTooCloseToSingularity {
        index: usize,
        clearance: f64,
        minimum: f64,
    },

    #[error("step controller could not meet tolerance {tol:e} within {budget} steps")]
    ToleranceNotMet { tol: f64, budget: usize },

    #[error("no clear approach path to singularity {index}")]
    NoClearPath { index: usize },

    #[error("singularity index {index} out of range (system has {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("matrix is singular to working precision")]
    SingularMatrix,

    #[error("eigenproblem ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("spectrum shape mismatch: {0}")]
    SpectrumShapeMismatch(String),

    #[error("commutation violated: residual {residual:e} exceeds {tolerance:e}")]
    CommutationViolated { residual: f64, tolerance: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("masses must be strictly positive, got {0:?}")]
    NonPositiveMass([f64; 3]),

    #[error("sigma {0} outside (0, 1/3]")]
    SigmaOutOfRange(f64),

    #[error("input mismatch: {0}")]
    InputMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl Error {
    pub(crate) fn parse(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
