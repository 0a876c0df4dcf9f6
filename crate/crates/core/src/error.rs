use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("unknown catalog entry '{0}'")]
    UnknownCatalog(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("metric is not symmetric at component ({row}, {col})")]
    NonSymmetricMetric { row: usize, col: usize },
    #[error("connection is not symmetric in its lower indices at ({mu}, {sigma}, {nu})")]
    Torsion { mu: usize, sigma: usize, nu: usize },
    #[error("parse error at offset {position} in '{input}': {message}")]
    Parse {
        input: String,
        position: usize,
        message: String,
    },
    #[error("point {point:?} lies outside the model domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("singular metric (|det g| = {det:e})")]
    SingularMetric { det: f64 },
    #[error("finite-difference stencil of half-width {reach:e} leaves the domain at {point:?}")]
    StencilOutsideDomain { point: Vec<f64>, reach: f64 },
    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("model '{0}' has no metric (connection-only model)")]
    MetricUnavailable(String),
    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    DerivativeOrder { requested: usize, max: usize },
    #[error("geodesic left the domain at s = {s}")]
    DomainExit { s: f64 },
    #[error("non-finite state encountered at s = {s}")]
    NonFinite { s: f64 },
    #[error("points are {distance:e} apart, beyond the locality radius {radius:e}")]
    OutsideLocality { distance: f64, radius: f64 },
    #[error(
        "outside normal neighborhood: shooting did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular shooting Jacobian (conjugate point)")]
    ConjugatePoint,
    #[error("jet order {order} outside the supported range {min}..={max}")]
    JetOrder { order: usize, min: usize, max: usize },
    #[error("displacement norm {norm:e} exceeds the jet radius {radius:e}")]
    TrustRadius { norm: f64, radius: f64 },
    #[error("ill-conditioned fit (condition number {condition:e})")]
    IllConditionedFit { condition: f64 },
    #[error("singular matrix")]
    SingularMatrix,
    #[error("degenerate fit: {points} points, need at least {required}")]
    DegenerateFit { points: usize, required: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
