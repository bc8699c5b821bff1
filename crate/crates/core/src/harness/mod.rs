//! Pipeline assembly, experiment configuration and the commands built on
//! them, including the live session endpoint.

mod commands;
mod config;
mod env;
mod pipeline;
mod serve;
pub mod wire;

pub use commands::{
    evaluate, evaluate_command, evaluate_policies, latency_budgets, resolve_agent, run, run_command, sweep_command,
    sweep_condition, train_command, train_stage1, train_stage2, EpisodeScore, Evaluation, LoadedPolicy, RunSummary,
    ScoreGrid, TrainSummary,
};
pub use config::{EpisodeBudget, ExperimentConfig, PolicySpec, ServeConfig, SweepConfig, TaskConfig};
pub use env::{decision_rewards, to_rollout, PipelineEnv, TaskSource};
pub use pipeline::{
    run_episode, run_episode_observed, Decision, DropCounts, EpisodeOutcome, LinkDelays, PipelineConfig,
    PipelineEvent, SmootherConfig, TimingConfig,
};
pub use serve::{live_episode_seed, serve, serve_on};
