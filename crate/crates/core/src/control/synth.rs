use serde::{Deserialize, Serialize};

use crate::base::{map_workspace, Pose, WorkspaceMap, POSE_DIM};

/// Turns the control-loop pose forecast into axis targets for the command
/// twin, pausing target advance while the plant has drifted too far from
/// the twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSynthesizer {
    pub map: WorkspaceMap,
    /// Twin–plant position divergence (m) above which targets freeze.
    pub guard_radius: f64,
    held: Option<[f64; POSE_DIM]>,
    holding: bool,
}

impl ControlSynthesizer {
    pub fn new(map: WorkspaceMap, guard_radius: f64) -> Self {
        Self {
            map,
            guard_radius,
            held: None,
            holding: false,
        }
    }

    pub fn is_holding(&self) -> bool {
        self.holding
    }

    /// Axis targets for `p_hat_r` given twin state `sigma_v` and plant
    /// feedback `sigma_r` (both as axis positions).
    pub fn synthesize(
        &mut self,
        p_hat_r: &Pose,
        sigma_v: &[f64; POSE_DIM],
        sigma_r: &[f64; POSE_DIM],
    ) -> [f64; POSE_DIM] {
        let divergence = (0..3)
            .map(|i| (sigma_v[i] - sigma_r[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        if self.holding {
            if divergence < 0.5 * self.guard_radius {
                self.holding = false;
            }
        } else if divergence > self.guard_radius && self.held.is_some() {
            self.holding = true;
        }
        if self.holding {
            if let Some(h) = self.held {
                return h;
            }
        }
        let target = map_workspace(p_hat_r, &self.map).to_array();
        self.held = Some(target);
        target
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_passes_pose_through() {
        let mut s = ControlSynthesizer::new(WorkspaceMap::identity(), 0.05);
        let p = Pose::from_position([0.01, 0.02, 0.03]);
        let at = p.to_array();
        assert_eq!(s.synthesize(&p, &at, &at), at);
    }

    #[test]
    fn guard_hysteresis() {
        let mut s = ControlSynthesizer::new(WorkspaceMap::identity(), 0.05);
        let twin = Pose::default().to_array();
        let mut plant = twin;
        let first = s.synthesize(&Pose::from_position([0.01, 0.0, 0.0]), &twin, &plant);

        plant[0] = 0.06;
        let frozen = s.synthesize(&Pose::from_position([0.02, 0.0, 0.0]), &twin, &plant);
        assert_eq!(frozen, first);
        assert!(s.is_holding());

        plant[0] = 0.03; // below radius, above radius / 2: still frozen
        assert_eq!(s.synthesize(&Pose::from_position([0.03, 0.0, 0.0]), &twin, &plant), first);

        plant[0] = 0.02;
        let moving = s.synthesize(&Pose::from_position([0.04, 0.0, 0.0]), &twin, &plant);
        assert_eq!(moving[0], 0.04);
        assert!(!s.is_holding());
    }
}
