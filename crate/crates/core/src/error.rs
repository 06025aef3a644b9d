use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("survival 1-F({s}) = {survival:e} is below the tail floor; use the frozen-boundary closure")]
    TailUnderflow { s: f64, survival: f64 },

    #[error("conditional sampler failed to bracket residual time from s = {s}")]
    SamplerFailure { s: f64 },

    #[error("trade intensity {value} at s = {s} exceeds thinning bound {bound}")]
    ThinningBoundViolated { s: f64, value: f64, bound: f64 },

    #[error("grid unstable: dt * (sigma2_max + lambda_max) = {product} > {limit}")]
    StabilityViolation { product: f64, limit: f64 },

    #[error("grid spec: {0}")]
    InvalidGrid(String),

    #[error("inventory range Q_max = {q_max} too small: doubling it moves interior values by {discrepancy:e}")]
    QRangeTooSmall { q_max: i64, discrepancy: f64 },

    #[error("inventory lookup q = {q} outside [-{q_max}, {q_max}]")]
    QRangeExceeded { q: i64, q_max: i64 },

    #[error("time {t} is outside the grid horizon [0, {horizon}]")]
    OutOfGrid { t: f64, horizon: f64 },

    #[error("policy undefined at t = {t}, s = {s}, q = {q}: {reason}")]
    PolicyUndefined {
        t: f64,
        s: f64,
        q: i64,
        reason: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e}, best {best:?})")]
    OptimizerNotConverged {
        iterations: usize,
        grad_norm: f64,
        best: [f64; 3],
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
