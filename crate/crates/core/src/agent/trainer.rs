use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{argmax, policy_forward, sample_action, NetShape, PolicyParams};
use super::optim::{Optimizer, OptimizerKind};
use super::ppo::{gae_advantage, ppo_loss_grad, PpoCoefficients, Reduction, Sample, TrajectoryBatch, Transition};
use super::types::{AgentState, HorizonAction, HorizonBins, HorizonPolicy};
use crate::base::derive_seed;
use crate::error::{Error, Result};
use crate::metrics::detect_convergence;

/// Learning hyperparameters of both training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Inner (task adaptation) step size α.
    pub inner_lr: f64,
    /// Meta step size β.
    pub meta_lr: f64,
    pub inner_optimizer: OptimizerKind,
    pub meta_optimizer: OptimizerKind,
    /// Passes over the adaptation batch.
    pub inner_epochs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub minibatch: usize,
    pub reduction: Reduction,
    /// Multiplies rewards before advantage and value estimation.
    pub reward_scale: f64,
    /// Trajectories per task and phase (K).
    pub trajectories_per_task: usize,
    /// Tasks per meta-iteration (N); `0` means every task.
    pub tasks_per_iteration: usize,
    pub horizon_step_ms: u32,
    pub max_horizon_ms: u32,
    pub net: NetShape,
    /// Moving-average window for convergence detection (episodes).
    pub convergence_window: usize,
    /// Convergence tolerance relative to the final smoothed reward.
    pub convergence_tolerance: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            inner_lr: 1e-3,
            meta_lr: 3e-3,
            inner_optimizer: OptimizerKind::Adam,
            meta_optimizer: OptimizerKind::Adam,
            inner_epochs: 4,
            gamma: 0.99,
            lambda: 0.99,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            minibatch: 256,
            reduction: Reduction::Mean,
            reward_scale: 1000.0,
            trajectories_per_task: 1,
            tasks_per_iteration: 0,
            horizon_step_ms: 100,
            max_horizon_ms: 1000,
            net: NetShape::default(),
            convergence_window: 50,
            convergence_tolerance: 0.05,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("reward_scale", self.reward_scale),
            ("convergence_tolerance", self.convergence_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("trainer.{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("inner_lr", self.inner_lr),
            ("meta_lr", self.meta_lr),
            ("value_coef", self.value_coef),
            ("entropy_coef", self.entropy_coef),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("trainer.{name} must be ≥ 0, got {v}")));
            }
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::config(format!("trainer.clip must be in (0, 1), got {}", self.clip)));
        }
        if self.gamma > 1.0 || self.lambda > 1.0 {
            return Err(Error::config("trainer.gamma and trainer.lambda must be ≤ 1"));
        }
        if self.minibatch == 0 || self.trajectories_per_task == 0 || self.inner_epochs == 0 {
            return Err(Error::config("trainer.minibatch, trajectories_per_task and inner_epochs must be ≥ 1"));
        }
        if self.horizon_step_ms == 0 || !self.max_horizon_ms.is_multiple_of(self.horizon_step_ms) {
            return Err(Error::config("trainer.max_horizon_ms must be a positive multiple of horizon_step_ms"));
        }
        if self.net.bins != self.bins().bins {
            return Err(Error::config(format!(
                "network has {} bins per head, horizons need {}",
                self.net.bins,
                self.bins().bins
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> HorizonBins {
        HorizonBins::new(self.max_horizon_ms, self.horizon_step_ms)
    }

    pub fn coefficients(&self) -> PpoCoefficients {
        PpoCoefficients {
            clip: self.clip,
            value: self.value_coef,
            entropy: self.entropy_coef,
        }
    }
}

/// One decision of a finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub state: AgentState,
    pub action: HorizonAction,
    pub reward: f64,
}

/// What an environment returns for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub steps: Vec<RolloutStep>,
    pub e_v: f64,
    pub e_r: f64,
    /// Mean measured latencies over the episode (ms).
    pub t_r: f64,
    pub t_v: f64,
}

/// A set of tasks the agent can be rolled out on.
pub trait Environment {
    fn task_count(&self) -> usize;
    fn task_name(&self, task: usize) -> String;
    fn rollout(&mut self, task: usize, policy: &mut dyn HorizonPolicy, seed: u64) -> Result<Rollout>;
}

/// The network as a horizon policy, sampling or greedy.
pub struct AgentPolicy<'a> {
    params: &'a PolicyParams,
    bins: HorizonBins,
    rng: ChaCha8Rng,
    greedy: bool,
    error: Option<Error>,
}

impl<'a> AgentPolicy<'a> {
    pub fn sampling(params: &'a PolicyParams, bins: HorizonBins, seed: u64) -> Self {
        Self {
            params,
            bins,
            rng: ChaCha8Rng::seed_from_u64(seed),
            greedy: false,
            error: None,
        }
    }

    pub fn greedy(params: &'a PolicyParams, bins: HorizonBins) -> Self {
        Self {
            greedy: true,
            ..Self::sampling(params, bins, 0)
        }
    }

    /// First forward-pass failure during the episode, if any.
    pub fn take_error(&mut self) -> Option<Error> {
        self.error.take()
    }
}

fn max_ms(bins: &HorizonBins) -> f64 {
    bins.to_ms(bins.bins - 1) as f64
}

impl HorizonPolicy for AgentPolicy<'_> {
    fn act(&mut self, state: &AgentState) -> HorizonAction {
        let out = match policy_forward(self.params, &state.features(max_ms(&self.bins))) {
            Ok(o) => o,
            Err(e) => {
                self.error.get_or_insert(e);
                return HorizonAction::default();
            }
        };
        let b = if self.greedy {
            [argmax(&out.probs[0]), argmax(&out.probs[1])]
        } else {
            sample_action(&out, &mut self.rng).0
        };
        HorizonAction::new(self.bins.to_ms(b[0]), self.bins.to_ms(b[1]))
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: u64,
    pub mean_reward: f64,
    pub e_v: f64,
    pub e_r: f64,
    pub t_r: f64,
    pub t_v: f64,
}

pub fn write_training_log(path: impl AsRef<Path>, rows: &[LogRow]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "episode,mean_reward,e_v,e_r,T_r,T_v")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.episode, r.mean_reward, r.e_v, r.e_r, r.t_r, r.t_v)?;
    }
    out.flush()?;
    Ok(())
}

/// Result of a training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub rows: Vec<LogRow>,
    /// Episode (1-based count) at which the reward curve converged.
    pub convergence_episode: Option<usize>,
}

/// Mutable training state: parameters, meta-optimizer and generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub cfg: TrainerConfig,
    pub params: PolicyParams,
    pub meta_opt: Optimizer,
    pub rng: ChaCha8Rng,
    pub seed: u64,
    /// Episodes rolled out so far.
    pub episodes: u64,
}

impl Trainer {
    pub fn new(cfg: TrainerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = PolicyParams::init(cfg.net, &mut rng);
        Ok(Self::with_params(cfg, params, seed))
    }

    pub fn with_params(cfg: TrainerConfig, params: PolicyParams, seed: u64) -> Self {
        Self {
            meta_opt: Optimizer::new(cfg.meta_optimizer, params.len()),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7261_6e64)),
            cfg,
            params,
            seed,
            episodes: 0,
        }
    }

    /// Rolls out one episode under `params` and turns it into a batch.
    pub fn collect(
        &mut self,
        env: &mut dyn Environment,
        params: &PolicyParams,
        task: usize,
    ) -> Result<(TrajectoryBatch, LogRow)> {
        let seed = derive_seed(self.seed, self.episodes + 1);
        let bins = self.cfg.bins();
        let mut policy = AgentPolicy::sampling(params, bins, derive_seed(seed, 0x0070_6f6c));
        let rollout = env.rollout(task, &mut policy, seed)?;
        if let Some(e) = policy.take_error() {
            return Err(e);
        }
        self.episodes += 1;
        let mut steps = Vec::with_capacity(rollout.steps.len());
        for s in &rollout.steps {
            let features = s.state.features(max_ms(&bins));
            let out = policy_forward(params, &features)?;
            let b = [bins.nearest_bin(s.action.h_r_ms), bins.nearest_bin(s.action.h_v_ms)];
            steps.push(Transition {
                features,
                bins: b,
                old_logp: [out.probs[0][b[0]].ln(), out.probs[1][b[1]].ln()],
                value: out.value,
                reward: s.reward,
            });
        }
        let mean_reward = if steps.is_empty() {
            0.0
        } else {
            steps.iter().map(|s| s.reward).sum::<f64>() / steps.len() as f64
        };
        let row = LogRow {
            episode: self.episodes,
            mean_reward,
            e_v: rollout.e_v,
            e_r: rollout.e_r,
            t_r: rollout.t_r,
            t_v: rollout.t_v,
        };
        Ok((TrajectoryBatch { task, steps }, row))
    }

    fn samples(&self, batches: &[TrajectoryBatch]) -> Vec<Sample> {
        gae_advantage(batches, self.cfg.gamma, self.cfg.lambda, self.cfg.reward_scale)
    }

    /// Task adaptation: `inner_epochs` passes of minibatch PPO steps from
    /// `params`, with a fresh inner optimizer.
    pub fn adapt(&mut self, params: &PolicyParams, batches: &[TrajectoryBatch]) -> Result<PolicyParams> {
        let samples = self.samples(batches);
        let coef = self.cfg.coefficients();
        let mut out = params.clone();
        let mut opt = Optimizer::new(self.cfg.inner_optimizer, out.len());
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..self.cfg.inner_epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let mb: Vec<Sample> = chunk.iter().map(|&i| samples[i]).collect();
                let (_, g) = ppo_loss_grad(&out, &mb, &coef, self.cfg.reduction)?;
                opt.step(&mut out.theta, &g, self.cfg.inner_lr);
            }
        }
        Ok(out)
    }

    fn tasks_for_iteration(&mut self, count: usize) -> Vec<usize> {
        let n = self.cfg.tasks_per_iteration;
        let mut all: Vec<usize> = (0..count).collect();
        if n == 0 || n >= count {
            return all;
        }
        all.shuffle(&mut self.rng);
        all.truncate(n);
        all.sort_unstable();
        all
    }

    /// One stage-1 meta-iteration over a batch of tasks; returns the log rows
    /// of every episode it rolled out.
    pub fn meta_iteration(&mut self, env: &mut dyn Environment) -> Result<Vec<LogRow>> {
        let tasks = self.tasks_for_iteration(env.task_count());
        let k = self.cfg.trajectories_per_task;
        let mut rows = Vec::new();
        let mut meta_grad = vec![0.0; self.params.len()];
        let theta = self.params.clone();
        for task in tasks {
            let mut support = Vec::with_capacity(k);
            for _ in 0..k {
                let (b, r) = self.collect(env, &theta, task)?;
                support.push(b);
                rows.push(r);
            }
            let adapted = self.adapt(&theta, &support)?;
            let mut query = Vec::with_capacity(k);
            for _ in 0..k {
                let (b, r) = self.collect(env, &adapted, task)?;
                query.push(b);
                rows.push(r);
            }
            let samples = self.samples(&query);
            let (_, g) = ppo_loss_grad(&adapted, &samples, &self.cfg.coefficients(), self.cfg.reduction)?;
            meta_grad.iter_mut().zip(&g).for_each(|(m, gi)| *m += gi);
        }
        let lr = self.cfg.meta_lr;
        self.meta_opt.step(&mut self.params.theta, &meta_grad, lr);
        self.params.validate()?;
        Ok(rows)
    }

    /// Stage 1: meta-iterations until `episode_budget` episodes have been
    /// rolled out. `on_iteration` sees the trainer after every update.
    pub fn run_stage1(
        &mut self,
        env: &mut dyn Environment,
        episode_budget: usize,
        on_iteration: &mut dyn FnMut(&Trainer, &[LogRow]) -> Result<()>,
    ) -> Result<StageReport> {
        let mut rows = Vec::new();
        while rows.len() < episode_budget {
            let new = self.meta_iteration(env)?;
            rows.extend(new);
            on_iteration(self, &rows)?;
        }
        Ok(self.report(rows))
    }

    /// One stage-2 update on `task`: roll out K episodes under the current
    /// parameters and adopt the adapted parameters.
    pub fn online_iteration(&mut self, env: &mut dyn Environment, task: usize) -> Result<Vec<LogRow>> {
        let theta = self.params.clone();
        let mut batches = Vec::new();
        let mut rows = Vec::new();
        for _ in 0..self.cfg.trajectories_per_task {
            let (b, r) = self.collect(env, &theta, task)?;
            batches.push(b);
            rows.push(r);
        }
        self.params = self.adapt(&theta, &batches)?;
        self.params.validate()?;
        Ok(rows)
    }

    /// Stage 2: online adaptation on a single (new) task.
    pub fn run_stage2(
        &mut self,
        env: &mut dyn Environment,
        task: usize,
        episode_budget: usize,
        on_iteration: &mut dyn FnMut(&Trainer, &[LogRow]) -> Result<()>,
    ) -> Result<StageReport> {
        let mut rows = Vec::new();
        while rows.len() < episode_budget {
            let new = self.online_iteration(env, task)?;
            rows.extend(new);
            on_iteration(self, &rows)?;
        }
        Ok(self.report(rows))
    }

    fn report(&self, rows: Vec<LogRow>) -> StageReport {
        let rewards: Vec<f64> = rows.iter().map(|r| r.mean_reward).collect();
        StageReport {
            convergence_episode: convergence_episode(&rewards, &self.cfg),
            rows,
        }
    }
}

/// Convergence point of a per-episode reward curve: the tolerance is a
/// fraction of the magnitude of the final moving average.
pub fn convergence_episode(rewards: &[f64], cfg: &TrainerConfig) -> Option<usize> {
    let w = cfg.convergence_window;
    if rewards.len() < 2 * w {
        return None;
    }
    let tail = rewards[rewards.len() - w..].iter().sum::<f64>() / w as f64;
    detect_convergence(rewards, w, cfg.convergence_tolerance * tail.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        TrainerConfig::default().validate().unwrap();
    }

    #[test]
    fn greedy_zero_net_picks_first_bin() {
        let p = PolicyParams::zeros(NetShape::default());
        let mut pol = AgentPolicy::greedy(&p, HorizonBins::default());
        let s = AgentState {
            pose: [0.0; 7],
            t_r_ms: 10,
            t_v_ms: 10,
        };
        assert_eq!(pol.act(&s), HorizonAction::new(0, 0));
    }
}
