use thiserror::Error;

use crate::linalg::Matrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("matrix is not positive semi-definite (eigenvalue {min_eigenvalue:e} vs largest {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("degenerate sample: all {0} values are equal")]
    DegenerateSample(usize),

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("row {row} is ill-conditioned: {excluded} of {total} samples excluded")]
    IllConditionedRow {
        row: usize,
        excluded: usize,
        total: usize,
    },

    #[error("column {0} is zero")]
    ZeroColumn(usize),

    #[error("dimension {got} below the minimum {min} for this estimator")]
    DimensionTooSmall { got: usize, min: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no convergence after {iterations} iterations (relative change {change:e})")]
    NonConvergence {
        iterations: usize,
        change: f64,
        last: Option<Box<Matrix<f64>>>,
    },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("lookup table is not strictly increasing at index {index}; rebuild with a higher quadrature order")]
    NonMonotoneTable { index: usize },
}
