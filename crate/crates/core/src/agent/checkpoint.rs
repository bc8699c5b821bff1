use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::{Trainer, TrainerConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "teleop-twin/policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized trainer: parameters, hyperparameters, optimizer and generator
/// state, and the episode counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub trainer: Trainer,
}

impl Checkpoint {
    pub fn of(trainer: &Trainer) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            trainer: trainer.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or("");
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if format != CHECKPOINT_FORMAT || version != CHECKPOINT_VERSION as u64 {
            return Err(Error::Version(format!(
                "expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found `{format}` v{version}"
            )));
        }
        let ck: Checkpoint = serde_json::from_value(raw)?;
        ck.trainer.params.validate()?;
        Ok(ck)
    }

    /// Fails with a version error when the stored network cannot serve
    /// `cfg`.
    pub fn check_compatible(&self, cfg: &TrainerConfig) -> Result<()> {
        let stored = &self.trainer.cfg;
        if stored.net != cfg.net || stored.horizon_step_ms != cfg.horizon_step_ms || stored.max_horizon_ms != cfg.max_horizon_ms {
            return Err(Error::Version(format!(
                "checkpoint network {:?} with {} ms bins up to {} ms does not match configured {:?} with {} ms bins up to {} ms",
                stored.net, stored.horizon_step_ms, stored.max_horizon_ms, cfg.net, cfg.horizon_step_ms, cfg.max_horizon_ms
            )));
        }
        Ok(())
    }
}
