use serde::{Deserialize, Serialize};

use super::rmp::{axes_from_pose, integrate, pose_of, AxisState};
use crate::base::{Pose, POSE_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    /// Bound on `|∫e|`; `None` leaves the integral unclamped.
    pub integral_clamp: Option<f64>,
}

impl Default for PidGains {
    fn default() -> Self {
        let k_i = 5.0;
        Self {
            k_p: 60.0,
            k_i,
            k_d: 8.0,
            // θ_th / K_i with the twin's capping threshold.
            integral_clamp: Some(0.5 / k_i),
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.k_p, self.k_i, self.k_d].iter().all(|g| g.is_finite() && *g >= 0.0);
        if !ok || self.integral_clamp.is_some_and(|c| !(c >= 0.0)) {
            return Err(Error::config(format!("PID gains must be non-negative, got {self:?}")));
        }
        Ok(())
    }
}

/// `u = K_p·e + K_i·∫e + K_d·ė` with a trapezoidal, clamped integral and a
/// backward-difference derivative. Returns `(u, integral')`.
pub fn pid_step(g: &PidGains, error: f64, integral: f64, prev_error: f64, dt: f64) -> (f64, f64) {
    let mut integral = integral + 0.5 * (error + prev_error) * dt;
    if let Some(c) = g.integral_clamp {
        integral = integral.clamp(-c, c);
    }
    let derivative = (error - prev_error) / dt;
    (g.k_p * error + g.k_i * integral + g.k_d * derivative, integral)
}

/// Emulated plant: seven double-integrator axes driven by per-axis PID.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub axes: [AxisState; POSE_DIM],
    pub integral: [f64; POSE_DIM],
    pub prev_error: [f64; POSE_DIM],
    /// Viscous damping `c` in `q̈ = u − c·q̇`.
    pub damping: f64,
    pub steps: u64,
}

impl PlantState {
    pub fn at_rest(pose: &Pose) -> Self {
        Self {
            axes: axes_from_pose(pose),
            integral: [0.0; POSE_DIM],
            prev_error: [0.0; POSE_DIM],
            damping: 0.0,
            steps: 0,
        }
    }

    pub fn pose(&self) -> Pose {
        pose_of(&self.axes)
    }

    pub fn positions(&self) -> [f64; POSE_DIM] {
        self.axes.map(|a| a.q)
    }
}

/// One PID update and integration step toward `command`.
pub fn plant_step(ps: &mut PlantState, g: &PidGains, command: &[f64; POSE_DIM], dt: f64) {
    let mut accel = [0.0; POSE_DIM];
    for i in 0..POSE_DIM {
        let e = command[i] - ps.axes[i].q;
        let (u, integral) = pid_step(g, e, ps.integral[i], ps.prev_error[i], dt);
        ps.integral[i] = integral;
        ps.prev_error[i] = e;
        accel[i] = u - ps.damping * ps.axes[i].qd;
    }
    integrate(&mut ps.axes, &accel, dt);
    ps.steps += 1;
}
