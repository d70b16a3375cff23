use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point not in domain (constraint violation {violation:e})")]
    NotInDomain { violation: f64 },

    #[error("Dykstra projection did not converge in {sweeps} sweeps (residual {residual:e})")]
    ProjectionNotConverged { sweeps: usize, residual: f64 },

    #[error("resolvent bracket failure at x = {x}: graph is not maximal monotone")]
    BracketFailure { x: f64 },

    #[error("degenerate domain: interior distance {distance:e}")]
    DegenerateDomain { distance: f64 },

    #[error("coefficient overflow at |x| = {norm:e}")]
    Overflow { norm: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("not enough usable estimates for a fit (excluded eps: {excluded:?})")]
    DegenerateFit { excluded: Vec<f64> },

    #[error("every Laplace exponent is -inf")]
    EmptyLaplace,
}
