use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("density is negative somewhere (min {min:e})")]
    InvalidDensity { min: f64 },

    #[error("invalid radial profile: {0}")]
    InvalidProfile(String),

    #[error("level-set shape check failed at x={x:?}, p={p:?}: {reason}")]
    InvalidShape { x: f64, p: f64, reason: String },

    #[error("Newton did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("singular matrix (zero pivot at {0})")]
    Singular(usize),

    #[error("stationary density is not unique: spectral gap {gap:e}")]
    AmbiguousDensity { gap: f64 },

    #[error("operator assembly failed: {0}")]
    Assembly(String),

    #[error("time step {dt:e} violates the stability guard {limit:e}")]
    DtTooLarge { dt: f64, limit: f64 },

    #[error("mode {0:?} is not resolvable on this grid")]
    UnresolvableMode(Vec<i64>),

    #[error("diagnostic skipped: {0}")]
    DiagnosticSkipped(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
