use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::pose::{quaternion_from_rotation, Pose};
use crate::error::{Error, Result};

const ROTATION_TOL: f64 = 1e-9;

/// Affine map from the input-device workspace into the robot workspace.
///
/// Positions go through `diag(scale) * rp * p + translation`; orientations are
/// pre-multiplied by `ro`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorkspaceMapRaw", into = "WorkspaceMapRaw")]
pub struct WorkspaceMap {
    scale: Vector3<f64>,
    rp: Rotation3<f64>,
    translation: Vector3<f64>,
    ro: Rotation3<f64>,
}

impl WorkspaceMap {
    pub fn new(
        scale: [f64; 3],
        rp: Matrix3<f64>,
        translation: [f64; 3],
        ro: Matrix3<f64>,
    ) -> Result<Self> {
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::config(format!(
                "workspace scale must be strictly positive, got {scale:?}"
            )));
        }
        if translation.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("workspace translation must be finite"));
        }
        Ok(Self {
            scale: Vector3::from(scale),
            rp: checked_rotation(rp, "rp")?,
            translation: Vector3::from(translation),
            ro: checked_rotation(ro, "ro")?,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: Vector3::repeat(1.0),
            rp: Rotation3::identity(),
            translation: Vector3::zeros(),
            ro: Rotation3::identity(),
        }
    }

    /// Pure translation, the common case of re-centering a device workspace.
    pub fn translation(d: [f64; 3]) -> Self {
        Self {
            translation: Vector3::from(d),
            ..Self::identity()
        }
    }

    pub fn scale(&self) -> [f64; 3] {
        self.scale.into()
    }

    pub fn rp(&self) -> &Rotation3<f64> {
        &self.rp
    }

    pub fn ro(&self) -> &Rotation3<f64> {
        &self.ro
    }

    pub fn offset(&self) -> [f64; 3] {
        self.translation.into()
    }

    pub fn map_position(&self, p: [f64; 3]) -> [f64; 3] {
        let rotated = self.rp * Vector3::from(p);
        (self.scale.component_mul(&rotated) + self.translation).into()
    }

    pub fn map(&self, pose: &Pose) -> Pose {
        let ri = pose.rotation();
        Pose {
            position: self.map_position(pose.position),
            orientation: quaternion_from_rotation(&(self.ro * ri)),
        }
    }
}

impl Default for WorkspaceMap {
    fn default() -> Self {
        Self::identity()
    }
}

/// Applies `m` to `p`.
pub fn map_workspace(p: &Pose, m: &WorkspaceMap) -> Pose {
    m.map(p)
}

fn checked_rotation(m: Matrix3<f64>, name: &str) -> Result<Rotation3<f64>> {
    if m.iter().any(|c| !c.is_finite()) {
        return Err(Error::config(format!("{name} has non-finite entries")));
    }
    let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
    let det = m.determinant();
    if orth > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::config(format!(
            "{name} is not a proper rotation (|RᵀR - I| = {orth:e}, det = {det})"
        )));
    }
    Ok(Rotation3::from_matrix_unchecked(m))
}

#[derive(Serialize, Deserialize)]
struct WorkspaceMapRaw {
    scale: [f64; 3],
    rp: [[f64; 3]; 3],
    translation: [f64; 3],
    ro: [[f64; 3]; 3],
}

fn rows(r: &Rotation3<f64>) -> [[f64; 3]; 3] {
    let m = r.matrix();
    [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
}

fn from_rows(r: [[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

impl From<WorkspaceMap> for WorkspaceMapRaw {
    fn from(m: WorkspaceMap) -> Self {
        Self {
            scale: m.scale.into(),
            rp: rows(&m.rp),
            translation: m.translation.into(),
            ro: rows(&m.ro),
        }
    }
}

impl TryFrom<WorkspaceMapRaw> for WorkspaceMap {
    type Error = Error;

    fn try_from(raw: WorkspaceMapRaw) -> Result<Self> {
        WorkspaceMap::new(raw.scale, from_rows(raw.rp), raw.translation, from_rows(raw.ro))
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    #[test]
    fn identity_is_identity() {
        let p = Pose::new([0.1, -0.2, 0.3], [0.1, 0.2, 0.3, 0.9]).unwrap();
        let q = WorkspaceMap::identity().map(&p);
        for (a, b) in p.to_array().iter().zip(q.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_and_translate() {
        let m = WorkspaceMap::new(
            [0.5; 3],
            Matrix3::identity(),
            [0.1, 0.0, 0.0],
            Matrix3::identity(),
        )
        .unwrap();
        let out = m.map_position([0.2, 0.4, 0.6]);
        for (a, b) in out.iter().zip([0.2, 0.2, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let rz = *Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2).matrix();
        let m = WorkspaceMap::new([1.0; 3], rz, [0.0; 3], Matrix3::identity()).unwrap();
        let out = m.map_position([1.0, 0.0, 0.0]);
        for (a, b) in out.iter().zip([0.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_improper_rotation() {
        let mut reflect = Matrix3::identity();
        reflect[(0, 0)] = -1.0;
        assert!(WorkspaceMap::new([1.0; 3], reflect, [0.0; 3], Matrix3::identity()).is_err());
        assert!(WorkspaceMap::new([1.0; 3], Matrix3::identity() * 1.01, [0.0; 3], Matrix3::identity()).is_err());
    }

    #[test]
    fn rejects_non_positive_scale() {
        assert!(WorkspaceMap::new([1.0, 0.0, 1.0], Matrix3::identity(), [0.0; 3], Matrix3::identity()).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let rz = *Rotation3::from_axis_angle(&Vector3::z_axis(), 0.3).matrix();
        let m = WorkspaceMap::new([1.0, 2.0, 0.5], rz, [0.1, 0.2, 0.3], rz.transpose()).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: WorkspaceMap = serde_json::from_str(&text).unwrap();
        assert!((back.rp().matrix() - m.rp().matrix()).abs().max() < 1e-15);
    }
}
