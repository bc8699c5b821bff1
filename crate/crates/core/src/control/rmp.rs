use serde::{Deserialize, Serialize};

use crate::base::{Micros, Pose, POSE_DIM};
use crate::error::{Error, Result};

/// Position, velocity and acceleration of one controlled coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisState {
    pub q: f64,
    pub qd: f64,
    pub qdd: f64,
}

/// Norm-limits `u` to `theta_th`: unchanged below the threshold, rescaled
/// onto the threshold sphere otherwise.
pub fn cap<const N: usize>(u: [f64; N], theta_th: f64) -> [f64; N] {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < theta_th {
        u
    } else {
        u.map(|v| theta_th * v / norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmpParams {
    pub k_p: f64,
    pub k_d: f64,
    pub theta_th: f64,
}

impl Default for RmpParams {
    fn default() -> Self {
        Self {
            k_p: 100.0,
            k_d: 20.0,
            theta_th: 0.5,
        }
    }
}

impl RmpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_p > 0.0 && self.k_d >= 0.0 && self.theta_th > 0.0) {
            return Err(Error::config(format!(
                "RMP gains need k_p > 0, k_d >= 0, theta_th > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `q̈ = k_p · R(target − q) − k_d · q̇`, the cap taken over the whole
/// error vector.
pub fn rmp_accel(axes: &[AxisState; POSE_DIM], target: &[f64; POSE_DIM], p: &RmpParams) -> [f64; POSE_DIM] {
    let err: [f64; POSE_DIM] = std::array::from_fn(|i| target[i] - axes[i].q);
    let capped = cap(err, p.theta_th);
    std::array::from_fn(|i| p.k_p * capped[i] - p.k_d * axes[i].qd)
}

/// Semi-implicit Euler step with the quaternion block rescaled to unit norm.
pub fn integrate(axes: &mut [AxisState; POSE_DIM], accel: &[f64; POSE_DIM], dt: f64) {
    for (a, qdd) in axes.iter_mut().zip(accel) {
        a.qdd = *qdd;
        a.qd += qdd * dt;
        a.q += a.qd * dt;
    }
    renormalize_quaternion_block(axes);
}

pub(crate) fn renormalize_quaternion_block(axes: &mut [AxisState; POSE_DIM]) {
    let norm = axes[3..].iter().map(|a| a.q * a.q).sum::<f64>().sqrt();
    if norm > 1e-12 && norm.is_finite() {
        for a in &mut axes[3..] {
            a.q /= norm;
        }
    }
}

pub(crate) fn axes_from_pose(p: &Pose) -> [AxisState; POSE_DIM] {
    p.to_array().map(|q| AxisState { q, qd: 0.0, qdd: 0.0 })
}

pub(crate) fn pose_of(axes: &[AxisState; POSE_DIM]) -> Pose {
    let v = axes.map(|a| a.q);
    Pose::from_array_or(v, &Pose::default())
}

/// Snapshot of the twin sent back to the operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub frame_id: u64,
    pub t: Micros,
    pub pose: Pose,
}

/// RMP-driven edge twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub axes: [AxisState; POSE_DIM],
    pub target: [f64; POSE_DIM],
    pub frames_rendered: u64,
    pub steps: u64,
}

impl TwinState {
    pub fn at_rest(pose: &Pose) -> Self {
        Self {
            axes: axes_from_pose(pose),
            target: pose.to_array(),
            frames_rendered: 0,
            steps: 0,
        }
    }

    pub fn pose(&self) -> Pose {
        pose_of(&self.axes)
    }

    pub fn positions(&self) -> [f64; POSE_DIM] {
        self.axes.map(|a| a.q)
    }

    pub fn set_target(&mut self, target: [f64; POSE_DIM]) {
        self.target = target;
    }

    /// Lyapunov-like energy `k_p‖e‖² + ‖q̇‖²` with respect to the target.
    pub fn energy(&self, p: &RmpParams) -> f64 {
        let e: f64 = (0..POSE_DIM).map(|i| (self.target[i] - self.axes[i].q).powi(2)).sum();
        let v: f64 = self.axes.iter().map(|a| a.qd * a.qd).sum();
        p.k_p * e + v
    }
}

/// One physics update of the twin toward its target.
pub fn step_sim(ts: &mut TwinState, p: &RmpParams, dt: f64) {
    let accel = rmp_accel(&ts.axes, &ts.target, p);
    integrate(&mut ts.axes, &accel, dt);
    ts.steps += 1;
}

/// Snapshots the twin as the next frame.
pub fn render_tick(ts: &mut TwinState, now: Micros) -> FrameState {
    ts.frames_rendered += 1;
    FrameState {
        frame_id: ts.frames_rendered,
        t: now,
        pose: ts.pose(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_examples() {
        assert_eq!(cap([1.0, 0.0], 2.0), [1.0, 0.0]);
        let c = cap([3.0, 4.0], 2.5);
        assert!((c[0] - 1.5).abs() < 1e-15 && (c[1] - 2.0).abs() < 1e-15);
        assert_eq!(cap([0.0; 3], 1.0), [0.0; 3]);
    }

    #[test]
    fn rmp_equilibrium_and_saturation() {
        let p = RmpParams::default();
        let axes = axes_from_pose(&Pose::from_position([0.1, 0.2, 0.3]));
        let target = axes.map(|a| a.q);
        assert_eq!(rmp_accel(&axes, &target, &p), [0.0; POSE_DIM]);

        let mut small = target;
        small[0] += 0.01;
        assert!((rmp_accel(&axes, &small, &p)[0] - 1.0).abs() < 1e-12);

        let mut far = target;
        far[1] += 3.0;
        let a = rmp_accel(&axes, &far, &p);
        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - p.k_p * p.theta_th).abs() < 1e-9);
    }

    #[test]
    fn forced_integration() {
        let mut axes = [AxisState::default(); POSE_DIM];
        axes[6].q = 1.0;
        let dt = 1.0 / 240.0;
        let mut accel = [0.0; POSE_DIM];
        accel[0] = 1.0;
        integrate(&mut axes, &accel, dt);
        assert!((axes[0].qd - dt).abs() < 1e-15);
        assert!((axes[0].q - dt * dt).abs() < 1e-15);
        assert_eq!(axes[1], AxisState::default());
    }

    #[test]
    fn frames_are_snapshots_with_increasing_ids() {
        let mut ts = TwinState::at_rest(&Pose::from_position([0.05, 0.0, 0.0]));
        let a = render_tick(&mut ts, Micros(0));
        let b = render_tick(&mut ts, Micros(16_000));
        assert!(b.frame_id > a.frame_id);
        assert_eq!(a.pose, ts.pose());
    }
}
