use serde::{Deserialize, Serialize};

use super::packet::{Stage, TimedPacket};
use crate::error::Result;

/// Smoothing factor of the running latency estimates.
pub const EWMA_ALPHA: f64 = 0.1;

/// Running end-to-end latency estimates for the control loop (`t_r`) and the
/// visual loop (`t_v`), in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyMeasurement {
    pub t_r: f64,
    pub t_v: f64,
    pub alpha: f64,
    samples_r: u64,
    samples_v: u64,
}

impl Default for LatencyMeasurement {
    fn default() -> Self {
        Self::new(EWMA_ALPHA)
    }
}

impl LatencyMeasurement {
    pub fn new(alpha: f64) -> Self {
        Self {
            t_r: 0.0,
            t_v: 0.0,
            alpha,
            samples_r: 0,
            samples_v: 0,
        }
    }

    pub fn samples(&self) -> (u64, u64) {
        (self.samples_r, self.samples_v)
    }

    fn blend(current: f64, sample: f64, n: u64, alpha: f64) -> f64 {
        if n == 0 {
            sample
        } else {
            current + alpha * (sample - current)
        }
    }

    /// Folds a raw control-loop latency into the running value.
    pub fn observe_control(&mut self, t_r_ms: f64) {
        self.t_r = Self::blend(self.t_r, t_r_ms.max(0.0), self.samples_r, self.alpha);
        self.samples_r += 1;
    }

    pub fn observe_visual(&mut self, t_v_ms: f64) {
        self.t_v = Self::blend(self.t_v, t_v_ms.max(0.0), self.samples_v, self.alpha);
        self.samples_v += 1;
    }

    /// `T_r = t9 - t1` for a packet whose execution completed. Returns the raw
    /// sample.
    pub fn measure_control<P>(&mut self, pkt: &TimedPacket<P>) -> Result<f64> {
        let t1 = pkt.require(Stage::Sampled)?;
        let t9 = pkt.require(Stage::Executed)?;
        let raw = (t9 - t1).as_ms();
        self.observe_control(raw);
        Ok(raw)
    }

    /// `T_v = t10 - t1` for a displayed frame. Returns the raw sample.
    pub fn measure_visual<P>(&mut self, pkt: &TimedPacket<P>) -> Result<f64> {
        let t1 = pkt.require(Stage::Sampled)?;
        let t10 = pkt.require(Stage::Displayed)?;
        let raw = (t10 - t1).as_ms();
        self.observe_visual(raw);
        Ok(raw)
    }
}
