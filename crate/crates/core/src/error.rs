use thiserror::Error;

/// Errors raised across the planning toolkit.
///
/// Steering failures and planner failures are *not* errors: they are ordinary
/// outcomes carried in [`crate::SteeringResult`] and [`crate::planner::PlanResult`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integration produced a non-finite state at t = {t}")]
    IntegrationFailure { t: f64 },

    #[error("environment too dense: accepted {accepted} of {attempts} samples")]
    EnvironmentTooDense { accepted: usize, attempts: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("dataset generation aborted: success rate {rate:.3} below {min_rate:.2}")]
    GenerationAborted { rate: f64, min_rate: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
