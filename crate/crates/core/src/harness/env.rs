use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pipeline::{run_episode_observed, EpisodeOutcome, PipelineConfig, PipelineEvent};
use crate::agent::{reward, Environment, HorizonPolicy, Rollout, RolloutStep};
use crate::base::{derive_seed, Pose};
use crate::error::{Error, Result};
use crate::metrics::{trajectory_errors, trajectory_errors_in, MetricWeights};
use crate::operator::{scripted_shape, PoseSource, Session, ShapeKind};

/// Where a task's operator motion comes from.
pub enum TaskSource {
    /// Calibration shape with random phase and speed per episode.
    Scripted { kind: ShapeKind, speed_spread: f64 },
    /// Recorded runs; each episode replays one, chosen by the episode seed.
    Recorded { name: String, runs: Vec<Session> },
    /// A continuous live feed. Episodes consume consecutive stretches of it.
    Live {
        name: String,
        source: Box<dyn PoseSource + Send>,
        offset_ms: f64,
    },
}

impl TaskSource {
    pub fn scripted(kind: ShapeKind, speed_spread: f64) -> Self {
        TaskSource::Scripted { kind, speed_spread }
    }

    pub fn name(&self) -> String {
        match self {
            TaskSource::Scripted { kind, .. } => kind.name().to_string(),
            TaskSource::Recorded { name, .. } | TaskSource::Live { name, .. } => name.clone(),
        }
    }
}

struct Shifted<'a> {
    inner: &'a mut (dyn PoseSource + Send),
    offset_ms: f64,
}

impl PoseSource for Shifted<'_> {
    fn pose_at(&mut self, t_ms: f64) -> Result<Pose> {
        self.inner.pose_at(t_ms + self.offset_ms)
    }
}

/// Per-decision rewards: each decision is scored on the record rows up to
/// the next decision.
pub fn decision_rewards(outcome: &EpisodeOutcome, w: &MetricWeights) -> Result<Vec<f64>> {
    let rec = &outcome.record;
    let d = &outcome.decisions;
    (0..d.len())
        .map(|i| {
            let end = d.get(i + 1).map_or(rec.len(), |n| n.row);
            let e = trajectory_errors_in(rec, d[i].row..end, w.orientation)?;
            Ok(reward(e.e_v(w), e.e_r(w)))
        })
        .collect()
}

/// Converts a finished episode into the learner's view.
pub fn to_rollout(outcome: &EpisodeOutcome, w: &MetricWeights) -> Result<Rollout> {
    let rewards = decision_rewards(outcome, w)?;
    let e = trajectory_errors(&outcome.record, w.orientation)?;
    Ok(Rollout {
        steps: outcome
            .decisions
            .iter()
            .zip(rewards)
            .map(|(d, reward)| RolloutStep {
                state: d.state,
                action: d.action,
                reward,
            })
            .collect(),
        e_v: e.e_v(w),
        e_r: e.e_r(w),
        t_r: outcome.record.mean_control_latency().unwrap_or(0.0),
        t_v: outcome.record.mean_visual_latency().unwrap_or(0.0),
    })
}

/// The simulated pipeline as a training environment.
pub struct PipelineEnv {
    pub cfg: PipelineConfig,
    pub tasks: Vec<TaskSource>,
    pub weights: MetricWeights,
}

impl PipelineEnv {
    pub fn new(cfg: PipelineConfig, tasks: Vec<TaskSource>, weights: MetricWeights) -> Result<Self> {
        cfg.validate()?;
        weights.validate()?;
        if tasks.is_empty() {
            return Err(Error::config("environment needs at least one task"));
        }
        Ok(Self { cfg, tasks, weights })
    }

    /// Scripted calibration tasks for `kinds`.
    pub fn scripted(cfg: PipelineConfig, kinds: &[ShapeKind], speed_spread: f64, weights: MetricWeights) -> Result<Self> {
        Self::new(
            cfg,
            kinds.iter().map(|k| TaskSource::scripted(*k, speed_spread)).collect(),
            weights,
        )
    }

    /// Runs one full episode and returns the raw outcome.
    pub fn episode(&mut self, task: usize, policy: &mut dyn HorizonPolicy, seed: u64) -> Result<EpisodeOutcome> {
        self.episode_observed(task, policy, seed, &mut |_| {})
    }

    /// [`PipelineEnv::episode`] reporting displays and decisions to `observer`.
    pub fn episode_observed(
        &mut self,
        task: usize,
        policy: &mut dyn HorizonPolicy,
        seed: u64,
        observer: &mut dyn FnMut(&PipelineEvent),
    ) -> Result<EpisodeOutcome> {
        let span = self.cfg.warmup_ms + self.cfg.duration_ms;
        let src = self
            .tasks
            .get_mut(task)
            .ok_or_else(|| Error::config(format!("no task with index {task}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7461_736b));
        match src {
            TaskSource::Scripted { kind, speed_spread } => {
                let mut shape = scripted_shape(*kind, *speed_spread, &mut rng);
                run_episode_observed(&self.cfg, &mut shape, policy, seed, observer)
            }
            TaskSource::Recorded { runs, name } => {
                if runs.is_empty() {
                    return Err(Error::config(format!("task `{name}` has no recorded runs")));
                }
                let mut run = runs[rng.random_range(0..runs.len())].clone();
                run_episode_observed(&self.cfg, &mut run, policy, seed, observer)
            }
            TaskSource::Live { source, offset_ms, .. } => {
                let mut shifted = Shifted {
                    inner: source.as_mut(),
                    offset_ms: *offset_ms,
                };
                let out = run_episode_observed(&self.cfg, &mut shifted, policy, seed, observer);
                *offset_ms += span;
                out
            }
        }
    }
}

impl Environment for PipelineEnv {
    fn task_count(&self) -> usize {
        self.tasks.len()
    }

    fn task_name(&self, task: usize) -> String {
        self.tasks.get(task).map(TaskSource::name).unwrap_or_default()
    }

    fn rollout(&mut self, task: usize, policy: &mut dyn HorizonPolicy, seed: u64) -> Result<Rollout> {
        let outcome = self.episode(task, policy, seed)?;
        to_rollout(&outcome, &self.weights)
    }
}
