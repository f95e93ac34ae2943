use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what}: argument {value} outside the admissible domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("system matrix is not positive definite (pivot {pivot} at index {index})")]
    Singular { index: usize, pivot: f64 },

    #[error("minimum attained at the search boundary s_max = {s_max}; enlarge the search interval")]
    BoundaryMinimum { s_max: f64 },

    #[error("power iteration did not converge after {iters} iterations")]
    NoConvergence { iters: usize },

    #[error(
        "stage alpha = {alpha:e}, eps = {eps:e} hit the iteration cap ({iters}) \
         with residual {residual:e}"
    )]
    MaxItersExceeded {
        alpha: f64,
        eps: f64,
        iters: usize,
        residual: f64,
    },

    #[error("descent inequality violated at outer step {step} by {violation:e}")]
    DescentViolation { step: usize, violation: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
