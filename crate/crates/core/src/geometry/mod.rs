//! Differential-geometric quantities for metric-preconditioned sampling:
//! metric and potential fields, Christoffel symbols, curvature matrices,
//! metric Hessians, and the sharp geodesic-convexity constant.

mod convexity;
mod curvature;
mod fields;

pub use convexity::{drift_lipschitz, lambda_g, ConvexityReport};
pub use curvature::{christoffel, curvature_matrices, hess_g, ChristoffelSymbols};
pub use fields::{
    quadratic_potential, DomainBox, MatrixDerivFn, MatrixFn, MetricField, PotentialField,
    SampleStrategy, ScalarFn, VectorFn, DEFAULT_FD_STEP,
};
