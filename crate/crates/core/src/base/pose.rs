use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest quaternion norm accepted by [`normalize_quaternion`].
pub const MIN_QUATERNION_NORM: f64 = 1e-12;

/// Normalizes `q = [x, y, z, w]` to unit length on the `w >= 0` hemisphere.
///
/// When `w` is exactly zero the first non-zero vector component is made
/// positive so that `q` and `-q` always map to the same representative.
pub fn normalize_quaternion(q: [f64; 4]) -> Result<[f64; 4]> {
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= MIN_QUATERNION_NORM {
        return Err(Error::DegenerateQuaternion { norm });
    }
    let mut out = q.map(|c| c / norm);
    if needs_flip(&out) {
        out = out.map(|c| -c);
    }
    Ok(out)
}

fn needs_flip(q: &[f64; 4]) -> bool {
    if q[3] != 0.0 {
        return q[3] < 0.0;
    }
    q[..3]
        .iter()
        .find(|c| **c != 0.0)
        .is_some_and(|c| *c < 0.0)
}

/// End-effector or input-device pose: Cartesian position (m) plus a unit
/// orientation quaternion stored as `[x, y, z, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl Pose {
    pub fn new(position: [f64; 3], orientation: [f64; 4]) -> Result<Self> {
        if position.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("pose position"));
        }
        Ok(Self {
            position,
            orientation: normalize_quaternion(orientation)?,
        })
    }

    pub fn from_position(position: [f64; 3]) -> Self {
        Self {
            position,
            orientation: [0.0, 0.0, 0.0, 1.0],
        }
    }

    /// `[lx, ly, lz, qx, qy, qz, qw]`
    pub fn to_array(&self) -> [f64; 7] {
        let [lx, ly, lz] = self.position;
        let [qx, qy, qz, qw] = self.orientation;
        [lx, ly, lz, qx, qy, qz, qw]
    }

    /// Builds a pose from a raw 7-vector, renormalizing the quaternion block.
    pub fn from_array(v: [f64; 7]) -> Result<Self> {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
    }

    /// Like [`Pose::from_array`] but keeps `fallback`'s orientation when the
    /// quaternion block of `v` has collapsed.
    pub fn from_array_or(v: [f64; 7], fallback: &Pose) -> Self {
        let position = [v[0], v[1], v[2]];
        let orientation =
            normalize_quaternion([v[3], v[4], v[5], v[6]]).unwrap_or(fallback.orientation);
        Self {
            position,
            orientation,
        }
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        let [x, y, z, w] = self.orientation;
        UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        self.unit_quaternion().to_rotation_matrix()
    }

    pub fn position_vector(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn position_distance(&self, other: &Pose) -> f64 {
        (self.position_vector() - other.position_vector()).norm()
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::from_position([0.0; 3])
    }
}

pub(crate) fn quaternion_from_rotation(r: &Rotation3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(r);
    let raw = [q.i, q.j, q.k, q.w];
    normalize_quaternion(raw).expect("rotation matrices yield unit quaternions")
}
