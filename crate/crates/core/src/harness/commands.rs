//! The batch commands: `run`, `train`, `evaluate` and `sweep`. Each has a
//! pure core returning in-memory results and a `*_command` wrapper that
//! writes the output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PolicySpec};
use super::env::PipelineEnv;
use super::pipeline::{DropCounts, EpisodeOutcome, PipelineEvent, TimingConfig};
use crate::agent::{
    write_training_log, AgentPolicy, BaselineKind, BaselinePolicy, Checkpoint, HorizonBins, LogRow, PolicyParams,
    StageReport, Trainer,
};
use crate::base::derive_seed;
use crate::error::{Error, Result};
use crate::metrics::{
    compare_policies, moving_average, task_table, trajectory_errors, Comparison, DelayRow, MetricWeights, Report,
    TaskRow, TrajectoryErrors,
};
use crate::network::DelaySpec;

const RUN_STREAM: u64 = 0x72_756e;
const EVAL_STREAM: u64 = 0x6576_616c;
const STAGE2_STREAM: u64 = 0x7374_6732;

/// A policy ready to drive episodes.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedPolicy {
    Baseline(BaselineKind),
    Agent(PolicyParams),
}

impl LoadedPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            LoadedPolicy::Baseline(k) => k.name(),
            LoadedPolicy::Agent(_) => "agent",
        }
    }

    /// Resolves a policy spec. An agent spec needs a checkpoint compatible
    /// with the configured network.
    pub fn from_spec(spec: &PolicySpec, cfg: &ExperimentConfig) -> Result<Self> {
        match spec {
            PolicySpec::Agent { checkpoint: Some(path) } => {
                let ck = Checkpoint::load(path)?;
                ck.check_compatible(&cfg.trainer)?;
                Ok(LoadedPolicy::Agent(ck.trainer.params))
            }
            PolicySpec::Agent { checkpoint: None } => {
                Err(Error::config("the agent policy needs a checkpoint (use --policy agent:<path>)"))
            }
            other => Ok(LoadedPolicy::Baseline(other.baseline().expect("non-agent spec"))),
        }
    }

    /// One episode of `task` under this policy. Agents act greedily.
    pub fn episode(
        &self,
        env: &mut PipelineEnv,
        task: usize,
        bins: HorizonBins,
        max_horizon_ms: u32,
        seed: u64,
    ) -> Result<EpisodeOutcome> {
        self.episode_observed(env, task, bins, max_horizon_ms, seed, &mut |_| {})
    }

    pub fn episode_observed(
        &self,
        env: &mut PipelineEnv,
        task: usize,
        bins: HorizonBins,
        max_horizon_ms: u32,
        seed: u64,
        observer: &mut dyn FnMut(&PipelineEvent),
    ) -> Result<EpisodeOutcome> {
        match self {
            LoadedPolicy::Baseline(kind) => {
                let mut p = BaselinePolicy::new(*kind, max_horizon_ms, derive_seed(seed, 0x0070_6f6c));
                env.episode_observed(task, &mut p, seed, observer)
            }
            LoadedPolicy::Agent(params) => {
                let mut p = AgentPolicy::greedy(params, bins);
                let out = env.episode_observed(task, &mut p, seed, observer)?;
                match p.take_error() {
                    Some(e) => Err(e),
                    None => Ok(out),
                }
            }
        }
    }
}

/// Scores of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub errors: TrajectoryErrors,
    pub e_v: f64,
    pub e_r: f64,
    pub combined: f64,
    /// Mean measured end-to-end latencies (ms).
    pub t_r_ms: f64,
    pub t_v_ms: f64,
}

impl EpisodeScore {
    pub fn of(outcome: &EpisodeOutcome, w: &MetricWeights) -> Result<Self> {
        let errors = trajectory_errors(&outcome.record, w.orientation)?;
        Ok(Self {
            errors,
            e_v: errors.e_v(w),
            e_r: errors.e_r(w),
            combined: errors.combined(w),
            t_r_ms: outcome.record.mean_control_latency().unwrap_or(f64::NAN),
            t_v_ms: outcome.record.mean_visual_latency().unwrap_or(f64::NAN),
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub code_version: String,
    pub policy: String,
    pub task: String,
    pub seed: u64,
    pub score: EpisodeScore,
    pub decisions: usize,
    pub model_fits: usize,
    pub drops: DropCounts,
}

/// One episode of the first configured task under the configured policy.
pub fn run(cfg: &ExperimentConfig) -> Result<(EpisodeOutcome, RunSummary)> {
    cfg.validate()?;
    let policy = LoadedPolicy::from_spec(&cfg.policy, cfg)?;
    let mut env = cfg.training_env()?;
    let seed = derive_seed(cfg.seed, RUN_STREAM);
    let outcome = policy.episode(&mut env, 0, cfg.trainer.bins(), cfg.trainer.max_horizon_ms, seed)?;
    let summary = RunSummary {
        config_hash: cfg.hash()?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        policy: policy.name().to_string(),
        task: env.tasks[0].name(),
        seed: cfg.seed,
        score: EpisodeScore::of(&outcome, &cfg.metrics)?,
        decisions: outcome.decisions.len(),
        model_fits: outcome.model_fits,
        drops: outcome.drops,
    };
    Ok((outcome, summary))
}

/// Writes `episode.json` (the full record) and `run_summary.json`.
pub fn run_command(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let (outcome, summary) = run(cfg)?;
    create_dir(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("episode.json"), outcome.record.to_json()?)?;
    write_json(&cfg.output_dir.join("run_summary.json"), &summary)?;
    Ok(summary)
}

/// Stage 1 on the configured tasks for `episodes` episodes.
pub fn train_stage1(
    cfg: &ExperimentConfig,
    episodes: usize,
    on_iteration: &mut dyn FnMut(&Trainer, &[LogRow]) -> Result<()>,
) -> Result<(Trainer, StageReport)> {
    cfg.validate()?;
    let mut env = cfg.training_env()?;
    let mut trainer = Trainer::new(cfg.trainer.clone(), cfg.seed)?;
    let report = trainer.run_stage1(&mut env, episodes, on_iteration)?;
    Ok((trainer, report))
}

/// Stage 2 on the held-out task, starting from `params`.
pub fn train_stage2(
    cfg: &ExperimentConfig,
    params: PolicyParams,
    seed: u64,
    episodes: usize,
    on_iteration: &mut dyn FnMut(&Trainer, &[LogRow]) -> Result<()>,
) -> Result<(Trainer, StageReport)> {
    let mut env = cfg.held_out_env()?;
    let mut trainer = Trainer::with_params(cfg.trainer.clone(), params, seed);
    let report = trainer.run_stage2(&mut env, 0, episodes, on_iteration)?;
    Ok((trainer, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub code_version: String,
    pub stage1_episodes: usize,
    pub stage1_convergence_episode: Option<usize>,
    pub stage1_final_reward: f64,
    pub stage2_episodes: usize,
    pub stage2_convergence_episode: Option<usize>,
    pub checkpoint: PathBuf,
}

fn write_curve(path: &Path, rows: &[LogRow], window: usize) -> Result<()> {
    let rewards: Vec<f64> = rows.iter().map(|r| r.mean_reward).collect();
    let smooth = moving_average(&rewards, window);
    let mut out = String::from("episode,reward,smoothed_reward\n");
    for ((r, raw), s) in rows.iter().zip(&rewards).zip(&smooth) {
        out.push_str(&format!("{},{raw},{s}\n", r.episode));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn tail_mean(rows: &[LogRow], window: usize) -> f64 {
    let tail = &rows[rows.len().saturating_sub(window)..];
    tail.iter().map(|r| r.mean_reward).sum::<f64>() / tail.len().max(1) as f64
}

/// Stage 1 (plus stage 2 when budgeted). Writes periodic checkpoints under
/// `checkpoints/`, the final `policy.json`, `training_log.csv`,
/// `training_curve.csv`, the stage-2 equivalents and `train_summary.json`.
pub fn train_command(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let out = &cfg.output_dir;
    let ck_dir = out.join("checkpoints");
    create_dir(&ck_dir)?;
    let every = cfg.episodes.checkpoint_every;
    let window = cfg.trainer.convergence_window;

    let mut saved = 0;
    let (trainer, stage1) = train_stage1(cfg, cfg.episodes.stage1, &mut |t, rows| {
        log::info!(
            "stage 1: {} episodes, smoothed reward {:.6}",
            rows.len(),
            tail_mean(rows, window)
        );
        if rows.len() / every > saved {
            saved = rows.len() / every;
            Checkpoint::of(t).save(ck_dir.join(format!("stage1_{:05}.json", rows.len())))?;
        }
        Ok(())
    })?;
    write_training_log(out.join("training_log.csv"), &stage1.rows)?;
    write_curve(&out.join("training_curve.csv"), &stage1.rows, window)?;
    let mut checkpoint = out.join("policy.json");
    Checkpoint::of(&trainer).save(&checkpoint)?;

    let mut stage2_conv = None;
    if cfg.episodes.stage2 > 0 {
        let mut saved = 0;
        let seed = derive_seed(cfg.seed, STAGE2_STREAM);
        let (adapted, stage2) = train_stage2(cfg, trainer.params.clone(), seed, cfg.episodes.stage2, &mut |t, rows| {
            if rows.len() / every > saved {
                saved = rows.len() / every;
                Checkpoint::of(t).save(ck_dir.join(format!("stage2_{:05}.json", rows.len())))?;
            }
            Ok(())
        })?;
        write_training_log(out.join("stage2_log.csv"), &stage2.rows)?;
        write_curve(&out.join("stage2_curve.csv"), &stage2.rows, window)?;
        checkpoint = out.join("policy_stage2.json");
        Checkpoint::of(&adapted).save(&checkpoint)?;
        stage2_conv = stage2.convergence_episode;
    }

    let summary = TrainSummary {
        config_hash: cfg.hash()?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        stage1_episodes: stage1.rows.len(),
        stage1_convergence_episode: stage1.convergence_episode,
        stage1_final_reward: tail_mean(&stage1.rows, window),
        stage2_episodes: cfg.episodes.stage2,
        stage2_convergence_episode: stage2_conv,
        checkpoint,
    };
    write_json(&out.join("train_summary.json"), &summary)?;
    Ok(summary)
}

/// Scores per `(task, policy)`.
pub type ScoreGrid = BTreeMap<(String, String), Vec<EpisodeScore>>;

/// `episodes` episodes of every task under every policy. Episode seeds
/// depend only on task and repetition, so all policies face the same
/// operator motion and channel draws.
pub fn evaluate_policies(
    cfg: &ExperimentConfig,
    env: &mut PipelineEnv,
    policies: &[LoadedPolicy],
    episodes: usize,
) -> Result<ScoreGrid> {
    let mut grid = ScoreGrid::new();
    let base = derive_seed(cfg.seed, EVAL_STREAM);
    for task in 0..env.tasks.len() {
        let name = env.tasks[task].name();
        for policy in policies {
            let mut scores = Vec::with_capacity(episodes);
            for ep in 0..episodes {
                let seed = derive_seed(base, ((task as u64) << 32) | ep as u64);
                let outcome = policy.episode(env, task, cfg.trainer.bins(), cfg.trainer.max_horizon_ms, seed)?;
                scores.push(EpisodeScore::of(&outcome, &cfg.metrics)?);
            }
            log::info!(
                "{name}/{}: combined RMSE {:.6} m",
                policy.name(),
                scores.iter().map(|s| s.combined).sum::<f64>() / episodes.max(1) as f64
            );
            grid.insert((name.clone(), policy.name().to_string()), scores);
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub table: Vec<TaskRow>,
    pub comparison: Comparison,
    pub scores: ScoreGrid,
}

/// Per-task table and pooled ranking of `policies` on the training tasks.
/// The ranking is expressed relative to the agent when present, else OD.
pub fn evaluate(cfg: &ExperimentConfig, policies: &[LoadedPolicy]) -> Result<Evaluation> {
    let mut env = cfg.training_env()?;
    let scores = evaluate_policies(cfg, &mut env, policies, cfg.episodes.evaluation)?;
    let errors: BTreeMap<(String, String), Vec<TrajectoryErrors>> = scores
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(|s| s.errors).collect()))
        .collect();
    let table = task_table(&errors, &cfg.metrics);
    let mut pooled: BTreeMap<String, Vec<TrajectoryErrors>> = BTreeMap::new();
    for ((_, policy), errs) in &errors {
        pooled.entry(policy.clone()).or_default().extend(errs);
    }
    let reference = if pooled.contains_key("agent") { "agent" } else { "od" };
    let comparison = compare_policies(&pooled, reference, &cfg.metrics)?;
    Ok(Evaluation {
        table,
        comparison,
        scores,
    })
}

/// The agent for `evaluate`: from the configured checkpoint, or trained in
/// place when the config names the agent without one.
pub fn resolve_agent(cfg: &ExperimentConfig) -> Result<Option<PolicyParams>> {
    match &cfg.policy {
        PolicySpec::Agent { checkpoint: None } => {
            log::info!("no checkpoint configured; training {} stage-1 episodes", cfg.episodes.stage1);
            Ok(Some(train_stage1(cfg, cfg.episodes.stage1, &mut |_, _| Ok(()))?.0.params))
        }
        spec @ PolicySpec::Agent { .. } => match LoadedPolicy::from_spec(spec, cfg)? {
            LoadedPolicy::Agent(p) => Ok(Some(p)),
            LoadedPolicy::Baseline(_) => unreachable!(),
        },
        _ => Ok(None),
    }
}

/// Writes `table.csv`/`table.json` (tasks × policies) and `comparison.json`.
pub fn evaluate_command(cfg: &ExperimentConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let mut policies: Vec<LoadedPolicy> = BaselineKind::ALL.iter().map(|k| LoadedPolicy::Baseline(*k)).collect();
    if let Some(p) = resolve_agent(cfg)? {
        policies.insert(0, LoadedPolicy::Agent(p));
    }
    let eval = evaluate(cfg, &policies)?;
    create_dir(&cfg.output_dir)?;
    let hash = cfg.hash()?;
    let report = Report::new(hash.clone(), eval.table.clone());
    report.write_csv(cfg.output_dir.join("table.csv"))?;
    report.write_json(cfg.output_dir.join("table.json"))?;
    Report::new(hash, vec![eval.comparison.clone()]).write_json(cfg.output_dir.join("comparison.json"))?;
    Ok(eval)
}

/// Expected visual and control latency budgets: transport means plus the
/// fixed processing on each path.
pub fn latency_budgets(uplink: &DelaySpec, downlink: &DelaySpec, command: &DelaySpec, t: &TimingConfig) -> (f64, f64) {
    let visual = uplink.expected_ms() + downlink.expected_ms() + t.visual_processing_ms();
    let control = t.predict_ms + uplink.expected_ms() + t.edge_service_ms + command.expected_ms() + t.exec_latency_ms;
    (visual, control)
}

/// One sweep condition: trains stage 1 from scratch under `N(mean, std²)` on
/// every link, then scores the greedy agent. Returns the row, the training
/// report and the trained parameters.
pub fn sweep_condition(
    cfg: &ExperimentConfig,
    mean_ms: f64,
    std_ms: f64,
) -> Result<(DelayRow, StageReport, PolicyParams)> {
    let cond = cfg.clone().with_uniform_delay(mean_ms, std_ms);
    let (trainer, report) = train_stage1(&cond, cfg.sweep.train_episodes, &mut |_, rows| {
        log::debug!("sweep {mean_ms} ms: {} episodes", rows.len());
        Ok(())
    })?;
    let mut env = cond.training_env()?;
    let agent = [LoadedPolicy::Agent(trainer.params.clone())];
    let scores = evaluate_policies(&cond, &mut env, &agent, cfg.sweep.eval_episodes)?;
    let all: Vec<&EpisodeScore> = scores.values().flatten().collect();
    let mean = |f: &dyn Fn(&EpisodeScore) -> f64| all.iter().map(|s| f(s)).sum::<f64>() / all.len().max(1) as f64;
    let d = &cond.pipeline.delay;
    let (visual_budget_ms, control_budget_ms) = latency_budgets(&d.uplink, &d.downlink, &d.command, &cond.pipeline.timing);
    let row = DelayRow {
        delay_mean_ms: mean_ms,
        delay_std_ms: std_ms,
        average_rmse: mean(&|s| s.combined),
        convergence_episode: report.convergence_episode,
        visual_e2e_ms: mean(&|s| s.t_v_ms),
        control_e2e_ms: mean(&|s| s.t_r_ms),
        visual_budget_ms,
        control_budget_ms,
    };
    log::info!(
        "sweep {mean_ms} ms: RMSE {:.6} m, convergence {:?}, T_v {:.1} ms (budget {:.1}), T_r {:.1} ms",
        row.average_rmse,
        row.convergence_episode,
        row.visual_e2e_ms,
        row.visual_budget_ms,
        row.control_e2e_ms
    );
    Ok((row, report, trainer.params))
}

/// Every configured condition. Writes `sweep.csv`, `sweep.json` and one
/// training log per condition.
pub fn sweep_command(cfg: &ExperimentConfig) -> Result<Vec<DelayRow>> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let mut rows = Vec::new();
    for &m in &cfg.sweep.means_ms {
        let (row, report, _) = sweep_condition(cfg, m, cfg.sweep.std_ms)?;
        write_training_log(cfg.output_dir.join(format!("sweep_{m}ms_log.csv")), &report.rows)?;
        rows.push(row);
    }
    let report = Report::new(cfg.hash()?, rows.clone());
    report.write_csv(cfg.output_dir.join("sweep.csv"))?;
    report.write_json(cfg.output_dir.join("sweep.json"))?;
    Ok(rows)
}
