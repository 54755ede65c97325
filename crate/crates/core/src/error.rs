use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("assembly failure: {0}")]
    AssemblyFailure(String),

    #[error("degenerate Rayleigh targets: both target frequencies equal {0} rad/s")]
    DegenerateTargets(f64),

    #[error("invalid sensor: {0}")]
    InvalidSensor(String),

    #[error("integration became unstable at t = {time:.6} s ({substeps} substeps per sample)")]
    UnstableIntegration { time: f64, substeps: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailure(String),

    #[error("surrogate training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("hidden-size selection failed: {0}")]
    SelectionFailure(String),

    #[error("rectified prediction diverged at t = {time:.6} s")]
    UnstablePrediction { time: f64 },

    #[error("incompatible surrogate: {0}")]
    IncompatibleSurrogate(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("pipeline order error: {0}")]
    PipelineOrder(String),

    #[error("incompatible artifacts: {0}")]
    IncompatibleArtifacts(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the `mre` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::NumericalFailure(_)
            | Error::UnstableIntegration { .. }
            | Error::UnstablePrediction { .. }
            | Error::OptimizationFailure(_)
            | Error::TrainingDiverged { .. }
            | Error::SelectionFailure(_)
            | Error::AssemblyFailure(_) => 3,
            Error::PipelineOrder(_) | Error::IncompatibleArtifacts(_) => 4,
            _ => 1,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
