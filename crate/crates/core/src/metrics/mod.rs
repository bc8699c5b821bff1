//! Weighted trajectory RMSE, convergence detection and policy comparison.

mod compare;
mod convergence;
mod record;
mod report;
mod rmse;

pub use compare::{compare_policies, percent_delta, Comparison, PolicyStats, MIN_EPISODES};
pub use convergence::{detect_convergence, episodes_to_asymptote, moving_average};
pub use record::{resample_linear, ActionSample, EpisodeRecord, MAX_GAP_PERIODS};
pub use report::{task_table, DelayRow, Report, TaskRow};
pub use rmse::{
    trajectory_errors, trajectory_errors_in, weighted_rmse_control, weighted_rmse_visual, MetricWeights,
    OrientationMetric, TrajectoryErrors,
};
