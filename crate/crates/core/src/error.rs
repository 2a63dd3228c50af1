use thiserror::Error;

use crate::mdp::StateId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state {0} is terminal and cannot be stepped")]
    TerminalStep(StateId),

    #[error("action {action} out of range (environment has {num_actions} actions)")]
    InvalidAction { action: usize, num_actions: usize },

    #[error("unknown environment `{0}` (expected one of: sushi, vase, box, survival)")]
    UnknownEnv(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("value iteration did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("inaction rollout from {0} did not close within {1} steps")]
    RolloutOverflow(StateId, usize),

    #[error("performance anchors are degenerate: optimal = unsafe = {0}")]
    DegenerateAnchors(f64),

    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid combination: {0}")]
    InvalidCombo(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
