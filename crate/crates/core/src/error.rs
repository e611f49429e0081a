use thiserror::Error;

/// Contract violations raised by the environments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("action index {index} out of range for {n_actions} actions")]
    InvalidAction { index: usize, n_actions: usize },
    #[error("agent interventions are only allowed in the on-policy setting")]
    InterventionNotAllowed,
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("setting {0:?} requires observed interventions but a step had none")]
    MissingInterventions(crate::env::tabular::Setting),
    #[error("observation sequence has zero likelihood under both models")]
    ImpossibleSequence,
    #[error("brute-force enumeration limited to {max} steps, got {len}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite network output (parameter blow-up)")]
    NonFinite,
    #[error("rollout is empty")]
    EmptyRollout,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("gradient contains non-finite values; update skipped")]
    NonFiniteGradient,
    #[error("worker {worker} failed: {message}")]
    Worker { worker: usize, message: String },
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: std::path::PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("no trace recorded for trial {trial} (record traces with --trace-every)")]
    MissingTrace { trial: usize },
    #[error("no runs to aggregate")]
    NoRuns,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl HarnessError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
