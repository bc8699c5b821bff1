use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {norm:e} is too small to normalize")]
    DegenerateQuaternion { norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("need at least {needed} samples to fit, history has {available}")]
    NotEnoughData { needed: usize, available: usize },

    #[error("regression is singular even without moving-average terms")]
    SingularRegression,

    #[error("horizon {horizon_ms} ms outside [0, {max_ms}] ms")]
    HorizonOutOfRange { horizon_ms: f64, max_ms: f64 },

    #[error("packet is missing the {0} stamp")]
    Instrumentation(&'static str),

    #[error("non-finite value in {0}")]
    Numerical(&'static str),

    #[error("live pose source produced nothing for {waited_ms} ms")]
    Stage2Timeout { waited_ms: u64 },

    #[error("checkpoint version mismatch: {0}")]
    Version(String),

    #[error("episode record is empty")]
    EmptyEpisode,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
