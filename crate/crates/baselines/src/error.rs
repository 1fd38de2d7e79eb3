use thiserror::Error;

pub type Result<T, E = BaselineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    Degenerate(&'static str),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty cluster after re-seeding")]
    EmptyCluster,

    #[error(transparent)]
    Core(#[from] emodm_core::Error),

    #[error(transparent)]
    Sim(#[from] emodm_sim::SimError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
