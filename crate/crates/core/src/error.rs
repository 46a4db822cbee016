use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("quadrature did not converge at x = {x} (error estimate {err:e})")]
    QuadratureNonConvergence { x: f64, err: f64 },

    #[error("matrix not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("degenerate time t = {0}: variance is zero")]
    DegenerateTime(f64),

    #[error("time {0} is not a grid node")]
    NodeNotOnGrid(f64),

    #[error("kernel mismatch between operands")]
    KernelMismatch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("solution blew up after node {last_valid} (|Z| = {norm:e})")]
    BlowUp { last_valid: usize, norm: f64 },

    #[error("step {step} too coarse: eps*|dx| = {size} >= 1")]
    StepTooCoarse { step: usize, size: f64 },

    #[error("vector field is not elliptic on the scanned box (lambda = {0:e})")]
    NotElliptic(f64),

    #[error("constraint residual {residual:e} above tolerance {tol:e} at max penalty")]
    ResidualNotMet { residual: f64, tol: f64 },

    #[error("deterministic Malliavin matrix degenerate at the optimizer (det = {0:e})")]
    DegenerateMalliavin(f64),

    #[error("density below noise floor at eps = {eps} (n*p*h = {score})")]
    BelowNoiseFloor { eps: f64, score: f64 },

    #[error("no points in the reliable window")]
    EmptyWindow,

    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("gate not passed: {0}")]
    GateNotPassed(String),

    #[error("malformed ensemble file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
