use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::base::{normalize_quaternion, Pose};
use crate::error::{Error, Result};

/// Path speed (m/s) of the calibration shapes.
///
/// Low enough that a pipeline without prediction still tracks within the
/// zero-delay floor, see `harness` tests.
pub const CALIBRATION_SPEED: f64 = 0.003;
/// Circumradius (m) of the calibration shapes.
pub const CALIBRATION_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Square,
    Pentagram,
    Triangle,
    FigureEight,
}

impl ShapeKind {
    /// The four drawing tasks used for meta-training.
    pub const TRAINING: [ShapeKind; 4] = [
        ShapeKind::Circle,
        ShapeKind::Square,
        ShapeKind::Pentagram,
        ShapeKind::Triangle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Pentagram => "pentagram",
            ShapeKind::Triangle => "triangle",
            ShapeKind::FigureEight => "figure_eight",
        }
    }

    /// Polyline vertices on the unit circle, traversal order. `None` for
    /// smooth curves.
    fn vertices(self) -> Option<Vec<[f64; 2]>> {
        let on_circle = |count: usize, stride: usize| {
            (0..count)
                .map(|k| {
                    let a = TAU * ((k * stride) % count) as f64 / count as f64;
                    [a.cos(), a.sin()]
                })
                .collect::<Vec<_>>()
        };
        match self {
            ShapeKind::Square => Some(on_circle(4, 1)),
            ShapeKind::Triangle => Some(on_circle(3, 1)),
            ShapeKind::Pentagram => Some(on_circle(5, 2)),
            ShapeKind::Circle | ShapeKind::FigureEight => None,
        }
    }

    /// Closed-curve length for unit circumradius.
    pub fn unit_perimeter(self) -> f64 {
        match self {
            ShapeKind::Circle => TAU,
            ShapeKind::FigureEight => figure_eight_unit_perimeter(),
            _ => {
                let v = self.vertices().expect("polyline shape");
                (0..v.len())
                    .map(|i| {
                        let a = v[i];
                        let b = v[(i + 1) % v.len()];
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                    })
                    .sum()
            }
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "circle" => Ok(ShapeKind::Circle),
            "square" => Ok(ShapeKind::Square),
            "pentagram" | "star" => Ok(ShapeKind::Pentagram),
            "triangle" => Ok(ShapeKind::Triangle),
            "figure_eight" | "figure8" | "eight" => Ok(ShapeKind::FigureEight),
            other => Err(Error::config(format!("unknown shape kind `{other}`"))),
        }
    }
}

fn figure_eight_point(theta: f64) -> [f64; 2] {
    [theta.sin(), theta.sin() * theta.cos()]
}

fn figure_eight_unit_perimeter() -> f64 {
    const N: usize = 4096;
    let mut len = 0.0;
    let mut prev = figure_eight_point(0.0);
    for i in 1..=N {
        let p = figure_eight_point(TAU * i as f64 / N as f64);
        len += ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
        prev = p;
    }
    len
}

/// A closed planar drawing task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Curve center (m).
    pub center: [f64; 3],
    /// Circumradius (m).
    pub radius: f64,
    /// Seconds per full traversal.
    pub period: f64,
    /// Orientation of the drawing plane, `[x, y, z, w]`; also the pose
    /// orientation held along the whole curve.
    pub plane: [f64; 4],
    /// Starting phase (rad) along the curve.
    pub phase: f64,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, radius: f64, period: f64) -> Result<Self> {
        let spec = Self {
            kind,
            center: [0.0; 3],
            radius,
            period,
            plane: [0.0, 0.0, 0.0, 1.0],
            phase: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Calibration task: [`CALIBRATION_RADIUS`] with the period chosen so
    /// the mean path speed equals [`CALIBRATION_SPEED`].
    pub fn calibration(kind: ShapeKind) -> Self {
        let radius = CALIBRATION_RADIUS;
        let period = kind.unit_perimeter() * radius / CALIBRATION_SPEED;
        Self::new(kind, radius, period).expect("calibration constants are valid")
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_center(mut self, center: [f64; 3]) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::config(format!("shape radius must be > 0, got {}", self.radius)));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::config(format!("shape period must be > 0, got {}", self.period)));
        }
        normalize_quaternion(self.plane)?;
        Ok(())
    }

    pub fn perimeter(&self) -> f64 {
        self.kind.unit_perimeter() * self.radius
    }

    /// Mean path speed in m/s.
    pub fn speed(&self) -> f64 {
        self.perimeter() / self.period
    }

    /// Fraction of the curve covered at `t_ms`, in `[0, 1)`.
    pub fn curve_fraction(&self, t_ms: f64) -> f64 {
        let u = t_ms / (self.period * 1000.0) + self.phase / TAU;
        u - u.floor()
    }

    /// In-plane point (before plane rotation and centering) at curve fraction `u`.
    fn planar_point(&self, u: f64) -> [f64; 2] {
        let r = self.radius;
        match self.kind {
            ShapeKind::Circle => {
                let a = TAU * u;
                [r * a.cos(), r * a.sin()]
            }
            ShapeKind::FigureEight => {
                let p = figure_eight_point(TAU * u);
                [r * p[0], r * p[1]]
            }
            kind => {
                let v = kind.vertices().expect("polyline shape");
                let n = v.len();
                let s = u * n as f64;
                let seg = (s.floor() as usize).min(n - 1);
                let frac = s - seg as f64;
                let a = v[seg];
                let b = v[(seg + 1) % n];
                [
                    r * (a[0] + (b[0] - a[0]) * frac),
                    r * (a[1] + (b[1] - a[1]) * frac),
                ]
            }
        }
    }

    fn plane_rotation(&self) -> UnitQuaternion<f64> {
        let [x, y, z, w] = self.plane;
        UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
    }

    /// Polyline corners in workspace coordinates; empty for smooth curves.
    pub fn corners(&self) -> Vec<[f64; 3]> {
        let Some(v) = self.kind.vertices() else {
            return Vec::new();
        };
        let rot = self.plane_rotation();
        v.iter()
            .map(|c| {
                let p = rot * Vector3::new(self.radius * c[0], self.radius * c[1], 0.0);
                [p.x + self.center[0], p.y + self.center[1], p.z + self.center[2]]
            })
            .collect()
    }
}

/// Pose on `shape` at time `t_ms`.
///
/// Polylines are traced at constant speed, smooth curves by their angle
/// parametrization. The curve is periodic, so negative times are accepted
/// and extend it backwards.
pub fn generate(shape: &ShapeSpec, t_ms: f64) -> Pose {
    let [x, y] = shape.planar_point(shape.curve_fraction(t_ms));
    let p = shape.plane_rotation() * Vector3::new(x, y, 0.0);
    let orientation = normalize_quaternion(shape.plane).unwrap_or([0.0, 0.0, 0.0, 1.0]);
    Pose {
        position: [
            p.x + shape.center[0],
            p.y + shape.center[1],
            p.z + shape.center[2],
        ],
        orientation,
    }
}
