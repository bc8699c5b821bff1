use serde::{Deserialize, Serialize};

use crate::base::{normalize_quaternion, Pose};
use crate::error::{Error, Result};

/// Largest gap, in grid periods, tolerated between consecutive samples.
pub const MAX_GAP_PERIODS: f64 = 3.0;

/// Horizons chosen at one decision instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub t_ms: f64,
    pub h_r_ms: u32,
    pub h_v_ms: u32,
}

/// Everything measured during one task execution, aligned on the operator's
/// sampling grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub rate_hz: f64,
    pub t_ms: Vec<f64>,
    /// Operator pose mapped into the robot workspace.
    pub operator: Vec<Pose>,
    /// Twin pose as displayed to the operator.
    pub visual: Vec<Pose>,
    /// Plant pose.
    pub real: Vec<Pose>,
    /// Running latency estimates the agent saw at each grid sample (ms).
    pub t_r: Vec<f64>,
    pub t_v: Vec<f64>,
    /// Raw per-packet end-to-end latencies (ms).
    pub control_latencies: Vec<f64>,
    pub visual_latencies: Vec<f64>,
    pub actions: Vec<ActionSample>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.t_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_ms.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyEpisode);
        }
        let n = self.len();
        for (name, len) in [
            ("operator", self.operator.len()),
            ("visual", self.visual.len()),
            ("real", self.real.len()),
        ] {
            if len != n {
                return Err(Error::config(format!("record series `{name}` has {len} samples, grid has {n}")));
            }
        }
        let limit = MAX_GAP_PERIODS * 1000.0 / self.rate_hz + 1e-6;
        if let Some(w) = self.t_ms.windows(2).find(|w| w[1] <= w[0] || w[1] - w[0] > limit) {
            return Err(Error::config(format!("record grid gap from {} to {} ms", w[0], w[1])));
        }
        Ok(())
    }

    /// Sub-record on grid indices `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> EpisodeRecord {
        let t0 = self.t_ms.get(range.start).copied().unwrap_or(f64::NEG_INFINITY);
        let t1 = self.t_ms.get(range.end).copied().unwrap_or(f64::INFINITY);
        EpisodeRecord {
            rate_hz: self.rate_hz,
            t_ms: self.t_ms[range.clone()].to_vec(),
            operator: self.operator[range.clone()].to_vec(),
            visual: self.visual[range.clone()].to_vec(),
            real: self.real[range.clone()].to_vec(),
            t_r: self.t_r.get(range.clone()).map(<[f64]>::to_vec).unwrap_or_default(),
            t_v: self.t_v.get(range).map(<[f64]>::to_vec).unwrap_or_default(),
            control_latencies: Vec::new(),
            visual_latencies: Vec::new(),
            actions: self
                .actions
                .iter()
                .filter(|a| a.t_ms >= t0 && a.t_ms < t1)
                .copied()
                .collect(),
        }
    }

    /// Every second grid sample, as if recorded at half the rate.
    pub fn subsample_by_two(&self) -> EpisodeRecord {
        let pick = |v: &[Pose]| v.iter().step_by(2).copied().collect::<Vec<_>>();
        let pickf = |v: &[f64]| v.iter().step_by(2).copied().collect::<Vec<_>>();
        EpisodeRecord {
            rate_hz: self.rate_hz / 2.0,
            t_ms: pickf(&self.t_ms),
            operator: pick(&self.operator),
            visual: pick(&self.visual),
            real: pick(&self.real),
            t_r: pickf(&self.t_r),
            t_v: pickf(&self.t_v),
            control_latencies: self.control_latencies.clone(),
            visual_latencies: self.visual_latencies.clone(),
            actions: self.actions.clone(),
        }
    }

    pub fn mean_control_latency(&self) -> Option<f64> {
        mean(&self.control_latencies)
    }

    pub fn mean_visual_latency(&self) -> Option<f64> {
        mean(&self.visual_latencies)
    }

    /// Serializes as compact JSON; byte-stable for identical records.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Linearly interpolates a timestamped pose series onto `grid`, holding the
/// end values outside its span. Quaternions are renormalized.
pub fn resample_linear(times: &[f64], poses: &[Pose], grid: &[f64]) -> Vec<Pose> {
    assert_eq!(times.len(), poses.len());
    if times.is_empty() {
        return vec![Pose::default(); grid.len()];
    }
    grid.iter()
        .map(|&t| {
            let i = times.partition_point(|s| *s <= t);
            if i == 0 {
                return poses[0];
            }
            if i == times.len() {
                return poses[i - 1];
            }
            let (t0, t1) = (times[i - 1], times[i]);
            let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
            let a = poses[i - 1].to_array();
            let mut b = poses[i].to_array();
            // Interpolate quaternions on the same hemisphere as `a`.
            let dot: f64 = (3..7).map(|k| a[k] * b[k]).sum();
            if dot < 0.0 {
                for v in &mut b[3..] {
                    *v = -*v;
                }
            }
            let v: [f64; 7] = std::array::from_fn(|k| a[k] + w * (b[k] - a[k]));
            let mut p = Pose::from_array_or(v, &poses[i - 1]);
            p.orientation = normalize_quaternion(p.orientation).unwrap_or(poses[i - 1].orientation);
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_midpoints_and_ends() {
        let times = [0.0, 10.0];
        let poses = [Pose::from_position([0.0; 3]), Pose::from_position([1.0, 0.0, 0.0])];
        let out = resample_linear(&times, &poses, &[-5.0, 2.5, 10.0, 99.0]);
        let xs: Vec<f64> = out.iter().map(|p| p.position[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 1.0, 1.0]);
    }

    #[test]
    fn empty_record_fails_validation() {
        assert!(matches!(EpisodeRecord::default().validate(), Err(Error::EmptyEpisode)));
    }
}
