//! Horizon selection: state/action types, baseline policies, the two-head
//! policy network, PPO with first-order meta-learning, and checkpoints.

mod baseline;
mod checkpoint;
mod net;
mod optim;
mod ppo;
mod trainer;
mod types;

pub use baseline::{baseline, BaselineKind, BaselinePolicy};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use net::{argmax, policy_forward, sample_action, sample_bin, ForwardCache, NetShape, PolicyOutput, PolicyParams};
pub use optim::{Optimizer, OptimizerKind};
pub use ppo::{
    clipped_surrogate, gae, gae_advantage, inner_adapt, normalize, ppo_loss, ppo_loss_grad, reward, PpoCoefficients,
    Reduction, Sample, TrajectoryBatch, Transition,
};
pub use trainer::{
    convergence_episode, write_training_log, AgentPolicy, Environment, LogRow, Rollout, RolloutStep, StageReport,
    Trainer, TrainerConfig,
};
pub use types::{AgentState, HorizonAction, HorizonBins, HorizonPolicy, STATE_DIM};
