use serde::{Deserialize, Serialize};

use super::pose::Pose;
use crate::error::{Error, Result};

/// Per-axis `[min, max]` bounds for the seven pose components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundsRaw", into = "BoundsRaw")]
pub struct NormalizationBounds {
    min: [f64; 7],
    max: [f64; 7],
}

impl NormalizationBounds {
    pub fn new(min: [f64; 7], max: [f64; 7]) -> Result<Self> {
        for (axis, (lo, hi)) in min.iter().zip(&max).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "normalization axis {axis}: need min < max, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { min, max })
    }

    /// Symmetric position box of half-width `half_extent` around `center`,
    /// quaternion components on `[-1, 1]`.
    pub fn around(center: [f64; 3], half_extent: f64) -> Result<Self> {
        let mut min = [-1.0; 7];
        let mut max = [1.0; 7];
        for i in 0..3 {
            min[i] = center[i] - half_extent;
            max[i] = center[i] + half_extent;
        }
        Self::new(min, max)
    }

    pub fn min(&self) -> &[f64; 7] {
        &self.min
    }

    pub fn max(&self) -> &[f64; 7] {
        &self.max
    }

    pub fn contains(&self, p: &Pose) -> bool {
        p.to_array()
            .iter()
            .enumerate()
            .all(|(i, v)| *v >= self.min[i] && *v <= self.max[i])
    }

    /// Inverse of [`minmax_normalize`] on `[-1, 1]^7`.
    pub fn denormalize(&self, v: &[f64; 7]) -> [f64; 7] {
        std::array::from_fn(|i| self.min[i] + (v[i] + 1.0) * 0.5 * (self.max[i] - self.min[i]))
    }
}

/// Maps each pose component affinely from `[min, max]` onto `[-1, 1]`,
/// clamping anything outside the bounds.
pub fn minmax_normalize(p: &Pose, b: &NormalizationBounds) -> [f64; 7] {
    let v = p.to_array();
    std::array::from_fn(|i| {
        let span = b.max[i] - b.min[i];
        (2.0 * (v[i] - b.min[i]) / span - 1.0).clamp(-1.0, 1.0)
    })
}

#[derive(Serialize, Deserialize)]
struct BoundsRaw {
    min: [f64; 7],
    max: [f64; 7],
}

impl From<NormalizationBounds> for BoundsRaw {
    fn from(b: NormalizationBounds) -> Self {
        Self { min: b.min, max: b.max }
    }
}

impl TryFrom<BoundsRaw> for NormalizationBounds {
    type Error = Error;

    fn try_from(raw: BoundsRaw) -> Result<Self> {
        NormalizationBounds::new(raw.min, raw.max)
    }
}
