use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::env::{PipelineEnv, TaskSource};
use super::pipeline::{LinkDelays, PipelineConfig};
use crate::agent::{BaselineKind, TrainerConfig};
use crate::error::{Error, Result};
use crate::metrics::MetricWeights;
use crate::network::DelaySpec;
use crate::operator::{load_shape_runs, ShapeKind};

/// Which horizon policy drives the pipeline.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicySpec {
    Wp,
    Rs,
    #[default]
    Od,
    /// Greedy actions of a trained policy. Without a checkpoint the agent
    /// is trained in place where a command needs one.
    Agent {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        checkpoint: Option<PathBuf>,
    },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Wp => "wp",
            PolicySpec::Rs => "rs",
            PolicySpec::Od => "od",
            PolicySpec::Agent { .. } => "agent",
        }
    }

    pub fn baseline(&self) -> Option<BaselineKind> {
        match self {
            PolicySpec::Wp => Some(BaselineKind::Wp),
            PolicySpec::Rs => Some(BaselineKind::Rs),
            PolicySpec::Od => Some(BaselineKind::Od),
            PolicySpec::Agent { .. } => None,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Agent { checkpoint: Some(p) } => write!(f, "agent:{}", p.display()),
            other => f.write_str(other.name()),
        }
    }
}

/// `wp`, `rs`, `od`, `agent` or `agent:<checkpoint path>`.
impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("agent:") {
            return Ok(PolicySpec::Agent {
                checkpoint: Some(PathBuf::from(path)),
            });
        }
        if s.eq_ignore_ascii_case("agent") {
            return Ok(PolicySpec::Agent { checkpoint: None });
        }
        Ok(match s.parse::<BaselineKind>()? {
            BaselineKind::Wp => PolicySpec::Wp,
            BaselineKind::Rs => PolicySpec::Rs,
            BaselineKind::Od => PolicySpec::Od,
        })
    }
}

/// Operator tasks: scripted shapes, or recorded runs under `corpus_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub shapes: Vec<ShapeKind>,
    /// Recorded sessions laid out as `<corpus_dir>/<shape>/run_*.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_dir: Option<PathBuf>,
    /// Relative speed spread of scripted repetitions.
    pub speed_spread: f64,
    /// The task kept out of stage 1 and used for online adaptation.
    pub held_out: ShapeKind,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            shapes: ShapeKind::TRAINING.to_vec(),
            corpus_dir: None,
            speed_spread: 0.1,
            held_out: ShapeKind::FigureEight,
        }
    }
}

impl TaskConfig {
    fn source(&self, kind: ShapeKind) -> Result<TaskSource> {
        match &self.corpus_dir {
            None => Ok(TaskSource::scripted(kind, self.speed_spread)),
            Some(dir) => Ok(TaskSource::Recorded {
                name: kind.name().to_string(),
                runs: load_shape_runs(dir, kind)?,
            }),
        }
    }

    pub fn training_sources(&self) -> Result<Vec<TaskSource>> {
        self.shapes.iter().map(|k| self.source(*k)).collect()
    }

    /// The held-out task is always scripted.
    pub fn held_out_source(&self) -> TaskSource {
        TaskSource::scripted(self.held_out, self.speed_spread)
    }
}

/// Episode counts of the batch commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeBudget {
    /// Evaluation episodes per policy and shape.
    pub evaluation: usize,
    pub stage1: usize,
    /// Online episodes on the held-out task after stage 1; 0 skips stage 2.
    pub stage2: usize,
    /// Checkpoint period during training (episodes).
    pub checkpoint_every: usize,
}

impl Default for EpisodeBudget {
    fn default() -> Self {
        Self {
            evaluation: 20,
            stage1: 500,
            stage2: 0,
            checkpoint_every: 100,
        }
    }
}

/// Delay conditions of the sweep; every link gets `N(mean, std²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub means_ms: Vec<f64>,
    pub std_ms: f64,
    /// Stage-1 episodes trained per condition.
    pub train_episodes: usize,
    /// Greedy evaluation episodes per shape and condition.
    pub eval_episodes: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            means_ms: vec![0.0, 50.0, 100.0],
            std_ms: 10.0,
            train_episodes: 500,
            eval_episodes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    /// How long the live pipeline waits for operator input before it
    /// reports starvation.
    pub input_timeout_ms: u64,
    /// Online episodes between checkpoint writes.
    pub checkpoint_every: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".to_string(),
            port: 8765,
            input_timeout_ms: 5000,
            checkpoint_every: 10,
        }
    }
}

/// A complete experiment, loaded from TOML. Every field but `seed` has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub metrics: MetricWeights,
    #[serde(default)]
    pub tasks: TaskConfig,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub episodes: EpisodeBudget,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub serve: ServeConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            output_dir: default_output_dir(),
            pipeline: PipelineConfig::default(),
            metrics: MetricWeights::default(),
            tasks: TaskConfig::default(),
            policy: PolicySpec::default(),
            trainer: TrainerConfig::default(),
            episodes: EpisodeBudget::default(),
            sweep: SweepConfig::default(),
            serve: ServeConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads and validates a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = &mut self.tasks.corpus_dir {
            fix(d);
        }
        if let PolicySpec::Agent { checkpoint: Some(c) } = &mut self.policy {
            fix(c);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.metrics.validate()?;
        self.trainer.validate()?;
        if self.tasks.shapes.is_empty() {
            return Err(Error::config("tasks.shapes is empty"));
        }
        if !(0.0..1.0).contains(&self.tasks.speed_spread) {
            return Err(Error::config("tasks.speed_spread must lie in [0, 1)"));
        }
        if let Some(dir) = &self.tasks.corpus_dir {
            if !dir.is_dir() {
                return Err(Error::config(format!("corpus directory {} does not exist", dir.display())));
            }
        }
        if let PolicySpec::Agent { checkpoint: Some(c) } = &self.policy {
            if !c.is_file() {
                return Err(Error::config(format!("checkpoint {} does not exist", c.display())));
            }
        }
        if self.trainer.max_horizon_ms as f64 > self.pipeline.predictor.max_horizon_ms {
            return Err(Error::config(format!(
                "trainer.max_horizon_ms {} exceeds predictor.max_horizon_ms {}",
                self.trainer.max_horizon_ms, self.pipeline.predictor.max_horizon_ms
            )));
        }
        if self.sweep.means_ms.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || !(self.sweep.std_ms >= 0.0) {
            return Err(Error::config("sweep delays must be finite and ≥ 0"));
        }
        if self.episodes.checkpoint_every == 0 || self.serve.checkpoint_every == 0 {
            return Err(Error::config("checkpoint periods must be ≥ 1"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Every link set to `N(mean, std²)`.
    pub fn with_uniform_delay(mut self, mean_ms: f64, std_ms: f64) -> Self {
        self.pipeline.delay = LinkDelays::uniform(DelaySpec::normal(mean_ms, std_ms));
        self
    }

    pub fn training_env(&self) -> Result<PipelineEnv> {
        PipelineEnv::new(self.pipeline.clone(), self.tasks.training_sources()?, self.metrics)
    }

    pub fn held_out_env(&self) -> Result<PipelineEnv> {
        PipelineEnv::new(self.pipeline.clone(), vec![self.tasks.held_out_source()], self.metrics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(ExperimentConfig::from_toml("output_dir = \"x\"").is_err());
        let cfg = ExperimentConfig::from_toml("seed = 3").unwrap();
        assert_eq!(cfg, ExperimentConfig::new(3));
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let mut cfg = ExperimentConfig::new(9).with_uniform_delay(100.0, 10.0);
        cfg.policy = "agent:ck.json".parse().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
        assert_ne!(ExperimentConfig::new(10).hash().unwrap(), ExperimentConfig::new(9).hash().unwrap());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("seed = 1\n[trainer]\nalpha = 3").is_err());
    }

    #[test]
    fn missing_checkpoint_fails_validation() {
        let mut cfg = ExperimentConfig::new(1);
        cfg.policy = "agent:/nonexistent/ck.json".parse().unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn policy_strings() {
        for s in ["wp", "rs", "od", "agent", "agent:a/b.json"] {
            assert_eq!(s.parse::<PolicySpec>().unwrap().to_string(), s);
        }
        assert!("xx".parse::<PolicySpec>().is_err());
    }
}
