use serde::{Deserialize, Serialize};

use crate::base::{Micros, POSE_DIM};
use crate::error::{Error, Result};

/// Interpolating command filter between the twin and the plant.
///
/// Within the blend window after a new command the output moves toward the
/// incoming value, `out = α·prev + (1−α)·incoming`, and `α` is squared after
/// every emission. Outside the window the previous output is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherState {
    pub alpha0: f64,
    pub alpha: f64,
    /// Time between emitted commands.
    pub t_co: Micros,
    /// Blend window after a new command, as a multiple of `t_co`.
    pub window_factor: f64,
    last_output: Option<[f64; POSE_DIM]>,
    last_command_at: Option<Micros>,
}

impl SmootherState {
    pub fn new(alpha0: f64, t_co: Micros) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 <= 1.0) {
            return Err(Error::config(format!("smoothing alpha must be in (0, 1], got {alpha0}")));
        }
        Ok(Self {
            alpha0,
            alpha: alpha0,
            t_co,
            window_factor: 2.0,
            last_output: None,
            last_command_at: None,
        })
    }

    pub fn last_output(&self) -> Option<&[f64; POSE_DIM]> {
        self.last_output.as_ref()
    }

    pub fn prime(&mut self, output: [f64; POSE_DIM]) {
        self.last_output = Some(output);
    }

    /// Marks the arrival of a new command at `now`: restarts the blend.
    pub fn new_command(&mut self, now: Micros) {
        self.alpha = self.alpha0;
        self.last_command_at = Some(now);
    }

    fn in_window(&self, now: Micros) -> bool {
        let window = (self.t_co.0 as f64 * self.window_factor).round() as i64;
        self.last_command_at.is_some_and(|t| (now - t).0 < window)
    }

    /// One emission at `now` given the current incoming command.
    pub fn smooth_command(&mut self, incoming: &[f64; POSE_DIM], now: Micros) -> [f64; POSE_DIM] {
        let Some(prev) = self.last_output else {
            self.last_output = Some(*incoming);
            return *incoming;
        };
        if !self.in_window(now) {
            return prev;
        }
        let a = self.alpha;
        let out = std::array::from_fn(|i| a * prev[i] + (1.0 - a) * incoming[i]);
        self.alpha = a * a;
        self.last_output = Some(out);
        out
    }
}
