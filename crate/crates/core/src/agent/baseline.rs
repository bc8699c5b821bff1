use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{AgentState, HorizonAction, HorizonPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// No prediction.
    Wp,
    /// Horizons drawn uniformly from `[0, H_max]`.
    Rs,
    /// Horizons equal to the measured latencies.
    Od,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Wp, BaselineKind::Rs, BaselineKind::Od];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Wp => "wp",
            BaselineKind::Rs => "rs",
            BaselineKind::Od => "od",
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wp" => Ok(BaselineKind::Wp),
            "rs" => Ok(BaselineKind::Rs),
            "od" => Ok(BaselineKind::Od),
            other => Err(Error::config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// Action of a baseline for `state`. Only `Rs` consumes randomness.
pub fn baseline(kind: BaselineKind, state: &AgentState, max_horizon_ms: u32, rng: &mut impl Rng) -> HorizonAction {
    match kind {
        BaselineKind::Wp => HorizonAction::new(0, 0),
        BaselineKind::Rs => HorizonAction::new(
            rng.random_range(0..=max_horizon_ms),
            rng.random_range(0..=max_horizon_ms),
        ),
        BaselineKind::Od => HorizonAction::new(state.t_r_ms, state.t_v_ms).clamped(max_horizon_ms),
    }
}

/// A baseline bound to its own seeded generator.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    pub kind: BaselineKind,
    pub max_horizon_ms: u32,
    rng: ChaCha8Rng,
}

impl BaselinePolicy {
    pub fn new(kind: BaselineKind, max_horizon_ms: u32, seed: u64) -> Self {
        Self {
            kind,
            max_horizon_ms,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl HorizonPolicy for BaselinePolicy {
    fn act(&mut self, state: &AgentState) -> HorizonAction {
        baseline(self.kind, state, self.max_horizon_ms, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(t_r: u32, t_v: u32) -> AgentState {
        AgentState {
            pose: [0.0; 7],
            t_r_ms: t_r,
            t_v_ms: t_v,
        }
    }

    #[test]
    fn od_copies_measured_latency() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(baseline(BaselineKind::Od, &state(127, 133), 1000, &mut rng), HorizonAction::new(127, 133));
        assert_eq!(baseline(BaselineKind::Od, &state(4000, 0), 1000, &mut rng), HorizonAction::new(1000, 0));
    }

    #[test]
    fn od_at_zero_latency_is_wp() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = state(0, 0);
        assert_eq!(
            baseline(BaselineKind::Od, &s, 1000, &mut rng),
            baseline(BaselineKind::Wp, &s, 1000, &mut rng)
        );
    }

    #[test]
    fn rs_stays_in_range() {
        let mut p = BaselinePolicy::new(BaselineKind::Rs, 1000, 5);
        for _ in 0..1000 {
            let a = p.act(&state(0, 0));
            assert!(a.h_r_ms <= 1000 && a.h_v_ms <= 1000);
        }
    }
}
