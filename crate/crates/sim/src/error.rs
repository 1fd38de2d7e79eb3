use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("nonlinear solver did not converge at t = {time:e} s")]
    SolverDiverged { time: f64 },

    #[error("rejection filter exhausted in period {period}")]
    RejectionExhausted { period: usize },

    #[error("coordinate singularity at theta = {theta:e}")]
    CoordinateSingularity { theta: f64 },

    #[error("trace has no labels")]
    MissingLabels,

    #[error("malformed trace row {row}: {reason}")]
    BadRow { row: usize, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
