use std::fmt;

use emodm_baselines::BaselineError;
use emodm_core::ErrorKind;
use emodm_sim::SimError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_DATA,
            error: error.into(),
        }
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            code: self.code,
            error: self.error.context(ctx),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<emodm_core::Error> for CliError {
    fn from(e: emodm_core::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Numerical => EXIT_NUMERICAL,
            ErrorKind::Data | ErrorKind::Io => EXIT_DATA,
        };
        Self { code, error: e.into() }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::InvalidSchedule(_) | SimError::InvalidParams(_) => EXIT_USAGE,
            SimError::SolverDiverged { .. }
            | SimError::RejectionExhausted { .. }
            | SimError::CoordinateSingularity { .. } => EXIT_NUMERICAL,
            SimError::MissingLabels | SimError::BadRow { .. } | SimError::Csv(_) | SimError::Io(_) => EXIT_DATA,
        };
        Self { code, error: e.into() }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Core(e) => e.into(),
            BaselineError::Sim(e) => e.into(),
            BaselineError::InvalidParams(_) => Self {
                code: EXIT_USAGE,
                error: e.into(),
            },
            other => Self::data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e)
    }
}
