use mbq_core::complexity::BoundError;
use mbq_core::diagnostics::DiagnosticsError;
use mbq_core::{EnvError, EstimationError, LearnerError, MdpError};
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const BOUND_VALIDITY: i32 = 3;
    pub const SOUNDNESS: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    BoundValidity(String),
    #[error("soundness violation: {0}")]
    Soundness(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BoundValidity(_) | CliError::Bound(BoundError::EpsOutOfValidity { .. }) => {
                exit::BOUND_VALIDITY
            }
            CliError::Soundness(_) | CliError::Diagnostics(DiagnosticsError::SandwichViolation { .. }) => {
                exit::SOUNDNESS
            }
            CliError::Learner(LearnerError::IterateBound { .. }) => exit::SOUNDNESS,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Pool(_) => exit::INTERNAL,
            _ => exit::CONFIG,
        }
    }
}
