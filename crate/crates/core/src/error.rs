use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no samples")]
    NoSamples,

    #[error("edge probability exceeds 1 (rho = {rho}, n = {n})")]
    EdgeProbabilityExceedsOne { rho: f64, n: usize },

    #[error("subcritical: {0}")]
    Subcritical(String),

    #[error("no sign change of the u* residual on (0, {u_max}]")]
    NoSignChange { u_max: f64 },

    #[error("radius exceeds truncation (radius {radius}, depth cap {depth_cap})")]
    RadiusExceedsTruncation { radius: usize, depth_cap: usize },

    #[error("tree node budget of {budget} exhausted")]
    NodeBudgetExceeded { budget: usize },

    #[error("component too large for dense spectral solve ({size} > {cap})")]
    ComponentTooLarge { size: usize, cap: usize },

    #[error("disconnected input: {0}")]
    Disconnected(String),

    #[error("trial {index} failed: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
