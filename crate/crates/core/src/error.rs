use thiserror::Error;

use crate::geometry::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point violates the embedding constraint (residual {residual:e})")]
    ConstraintViolation { residual: f64 },

    #[error("vector is not tangent at its base point (residual {residual:e})")]
    NotTangent { residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point lies in the cut locus (distance {distance})")]
    CutLocus { distance: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("objects live on different manifolds")]
    ManifoldMismatch,

    #[error("product support size {size} exceeds the cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("Fréchet mean did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    FrechetNonconvergence {
        best: Point,
        grad_norm: f64,
        iterations: usize,
    },

    #[error("oracle precondition violated: {0}")]
    OracleSize(String),

    #[error("degenerate Jacobian: det J({t}) = {det:e}")]
    DegenerateJacobian { t: f64, det: f64 },

    #[error("fixed-point iteration did not converge: {0}")]
    FixedPoint(String),

    #[error("quadrature did not reach tolerance {tol:e} on [{a}, {b}]")]
    Quadrature { a: f64, b: f64, tol: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("gauge construction failed: {0}")]
    GaugeFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
