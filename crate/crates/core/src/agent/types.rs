use serde::{Deserialize, Serialize};

use crate::base::{minmax_normalize, NormalizationBounds, Pose};

/// What the horizon policy observes: the normalized latest operator pose and
/// the running end-to-end latencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub pose: [f64; 7],
    pub t_r_ms: u32,
    pub t_v_ms: u32,
}

/// Width of the network input.
pub const STATE_DIM: usize = 9;

impl AgentState {
    pub fn new(pose: &Pose, bounds: &NormalizationBounds, t_r_ms: f64, t_v_ms: f64) -> Self {
        Self {
            pose: minmax_normalize(pose, bounds),
            t_r_ms: t_r_ms.max(0.0).round() as u32,
            t_v_ms: t_v_ms.max(0.0).round() as u32,
        }
    }

    /// Network input: pose block as is, latencies divided by `max_horizon_ms`.
    pub fn features(&self, max_horizon_ms: f64) -> [f64; STATE_DIM] {
        let mut x = [0.0; STATE_DIM];
        x[..7].copy_from_slice(&self.pose);
        x[7] = self.t_r_ms as f64 / max_horizon_ms;
        x[8] = self.t_v_ms as f64 / max_horizon_ms;
        x
    }
}

/// Prediction horizons for the control and visual loops (ms).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct HorizonAction {
    pub h_r_ms: u32,
    pub h_v_ms: u32,
}

impl HorizonAction {
    pub fn new(h_r_ms: u32, h_v_ms: u32) -> Self {
        Self { h_r_ms, h_v_ms }
    }

    pub fn clamped(self, max_ms: u32) -> Self {
        Self {
            h_r_ms: self.h_r_ms.min(max_ms),
            h_v_ms: self.h_v_ms.min(max_ms),
        }
    }
}

/// Discretization of each head: `bins` values `0, step, 2·step, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonBins {
    pub step_ms: u32,
    pub bins: usize,
}

impl HorizonBins {
    pub fn new(max_horizon_ms: u32, step_ms: u32) -> Self {
        Self {
            step_ms,
            bins: (max_horizon_ms / step_ms) as usize + 1,
        }
    }

    pub fn to_ms(&self, bin: usize) -> u32 {
        bin as u32 * self.step_ms
    }

    pub fn nearest_bin(&self, ms: u32) -> usize {
        (((ms as f64) / self.step_ms as f64).round() as usize).min(self.bins - 1)
    }
}

impl Default for HorizonBins {
    fn default() -> Self {
        Self::new(1000, 100)
    }
}

/// Anything that picks horizons from a state.
pub trait HorizonPolicy {
    fn act(&mut self, state: &AgentState) -> HorizonAction;
}

impl<F: FnMut(&AgentState) -> HorizonAction> HorizonPolicy for F {
    fn act(&mut self, state: &AgentState) -> HorizonAction {
        self(state)
    }
}
