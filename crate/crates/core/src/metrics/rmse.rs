use serde::{Deserialize, Serialize};

use super::record::EpisodeRecord;
use crate::base::{normalize_quaternion, Pose};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationMetric {
    /// Element-wise RMSE of hemisphere-canonical quaternions.
    #[default]
    Elementwise,
    /// RMS of the geodesic rotation angle (rad).
    Geodesic,
}

/// Weights of position and orientation error in the visual (`w1`, `w2`)
/// and control (`w3`, `w4`) loops. The reward sign is applied separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub orientation: OrientationMetric,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            w4: 1.0,
            orientation: OrientationMetric::Elementwise,
        }
    }
}

impl MetricWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w1, self.w2, self.w3, self.w4].iter().any(|w| !w.is_finite()) {
            return Err(Error::config("metric weights must be finite"));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w1: self.w1 * k,
            w2: self.w2 * k,
            w3: self.w3 * k,
            w4: self.w4 * k,
            orientation: self.orientation,
        }
    }
}

/// Unweighted position/orientation RMSE of both loops.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryErrors {
    pub pos_v: f64,
    pub ori_v: f64,
    pub pos_r: f64,
    pub ori_r: f64,
}

impl TrajectoryErrors {
    pub fn e_v(&self, w: &MetricWeights) -> f64 {
        w.w1 * self.pos_v + w.w2 * self.ori_v
    }

    pub fn e_r(&self, w: &MetricWeights) -> f64 {
        w.w3 * self.pos_r + w.w4 * self.ori_r
    }

    pub fn combined(&self, w: &MetricWeights) -> f64 {
        self.e_v(w) + self.e_r(w)
    }
}

fn position_rmse(a: &[Pose], b: &[Pose]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (0..3).map(|i| (x.position[i] - y.position[i]).powi(2)).sum::<f64>())
        .sum();
    (sum / a.len() as f64).sqrt()
}

fn canonical(q: [f64; 4]) -> [f64; 4] {
    normalize_quaternion(q).unwrap_or([0.0, 0.0, 0.0, 1.0])
}

fn orientation_rmse(a: &[Pose], b: &[Pose], metric: OrientationMetric) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let qa = canonical(x.orientation);
            let qb = canonical(y.orientation);
            match metric {
                OrientationMetric::Elementwise => (0..4).map(|i| (qa[i] - qb[i]).powi(2)).sum::<f64>(),
                OrientationMetric::Geodesic => {
                    let dot: f64 = (0..4).map(|i| qa[i] * qb[i]).sum::<f64>().abs().min(1.0);
                    (2.0 * dot.acos()).powi(2)
                }
            }
        })
        .sum();
    (sum / a.len() as f64).sqrt()
}

/// Errors over grid indices `range` of `rec`.
pub fn trajectory_errors_in(
    rec: &EpisodeRecord,
    range: std::ops::Range<usize>,
    metric: OrientationMetric,
) -> Result<TrajectoryErrors> {
    if range.is_empty() || range.end > rec.len() {
        return Err(Error::EmptyEpisode);
    }
    let op = &rec.operator[range.clone()];
    let vis = &rec.visual[range.clone()];
    let real = &rec.real[range];
    Ok(TrajectoryErrors {
        pos_v: position_rmse(op, vis),
        ori_v: orientation_rmse(op, vis, metric),
        pos_r: position_rmse(op, real),
        ori_r: orientation_rmse(op, real, metric),
    })
}

pub fn trajectory_errors(rec: &EpisodeRecord, metric: OrientationMetric) -> Result<TrajectoryErrors> {
    trajectory_errors_in(rec, 0..rec.len(), metric)
}

/// `e_v = w1·RMSE_pos(p_i, p_v) + w2·RMSE_ori(p_i, p_v)`.
pub fn weighted_rmse_visual(rec: &EpisodeRecord, w: &MetricWeights) -> Result<f64> {
    Ok(trajectory_errors(rec, w.orientation)?.e_v(w))
}

/// `e_r = w3·RMSE_pos(p_i, p_r) + w4·RMSE_ori(p_i, p_r)`.
pub fn weighted_rmse_control(rec: &EpisodeRecord, w: &MetricWeights) -> Result<f64> {
    Ok(trajectory_errors(rec, w.orientation)?.e_r(w))
}
