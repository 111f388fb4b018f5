use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("facet functionals do not span R^{0}")]
    FacetsNotSpanning(usize),

    #[error("seminorm is degenerate (minimum ratio {min_ratio:e} on the unit sphere)")]
    DegenerateSeminorm { min_ratio: f64 },

    #[error("body is degenerate (volume {volume:e})")]
    DegenerateBody { volume: f64 },

    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("linear map is not short: operator norm {operator_norm} > 1")]
    NotShort { operator_norm: f64 },

    #[error("declared Lipschitz constant {declared} violated (observed ratio {observed})")]
    LipschitzViolation { declared: f64, observed: f64 },

    #[error("metric derivative undefined at {point:?}: {reason}")]
    UndefinedDerivative { point: Vec<f64>, reason: String },

    #[error("injective decomposition failed: {0}")]
    Decomposition(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("memory budget exceeded: {estimated} vertices requested, limit {limit}")]
    MemoryBudget { estimated: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
