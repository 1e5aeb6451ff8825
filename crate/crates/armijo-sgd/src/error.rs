use thiserror::Error;

/// Errors surfaced by oracles, solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("oracle returned a non-finite sample at draw index {index}")]
    OracleFault { index: usize },

    #[error("mini-batch value requested on an empty batch")]
    EmptyBatch,

    #[error("iterate became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error(
        "line search exceeded the L cap ({cap:.6e}) at iteration {iteration}; \
         the declared variance bound or smoothness assumption is likely violated"
    )]
    LinesearchFailed { iteration: usize, cap: f64 },

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
