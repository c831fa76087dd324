//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular metric at {point:?}: {detail}")]
    SingularMetric { point: Vec<f64>, detail: String },

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("invalid domain box: {0}")]
    InvalidDomain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported dimension {got}: {detail}")]
    UnsupportedDimension { got: usize, detail: String },

    #[error("stability bound violated: dt = {dt:e} exceeds max stable step {dt_max:e}")]
    Stability { dt: f64, dt_max: f64 },

    #[error("scheme produced invalid state: {0}")]
    Scheme(String),

    #[error("eigensolver did not converge: residual {residual:e} after {iterations} iterations")]
    Convergence { residual: f64, iterations: usize },

    #[error("optimizer did not converge: gradient norm {grad_norm:e} after {iterations} iterations")]
    Optimization { grad_norm: f64, iterations: usize },

    #[error("particle {index} diverged at {position:?}")]
    Divergence { index: usize, position: Vec<f64> },

    #[error("particle {index} left the density grid at {position:?}")]
    OutOfDomain { index: usize, position: Vec<f64> },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("operator assembly failed: non-finite potential at nodes {nodes:?}")]
    Assembly { nodes: Vec<usize> },

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown catalog key: {0}")]
    UnknownCatalogKey(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
