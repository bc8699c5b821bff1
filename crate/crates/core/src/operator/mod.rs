//! Operator-side pose sources: parametric drawing tasks, recorded sessions
//! and a live feed.

mod corpus;
mod live;
mod session;
mod shape;

pub use corpus::{load_shape_runs, run_path, scripted_run, scripted_shape, write_corpus, CorpusSpec};
pub use live::{live_channel, LiveInput, LiveSender};
pub use session::{sample_stream, Session, SessionSample, ACTUAL_COLUMNS, TARGET_COLUMNS};
pub use shape::{generate, ShapeKind, ShapeSpec, CALIBRATION_RADIUS, CALIBRATION_SPEED};

use crate::base::Pose;
use crate::error::{Error, Result};

/// Input-device sampling rate (Hz).
pub const DEFAULT_RATE_HZ: f64 = 120.0;

/// Anything that yields the operator's target pose at a given time.
pub trait PoseSource {
    fn pose_at(&mut self, t_ms: f64) -> Result<Pose>;

    /// Whether `pose_at` is meaningful before time zero, so a forecaster can
    /// be warmed with past motion.
    fn extends_backwards(&self) -> bool {
        false
    }
}

impl PoseSource for ShapeSpec {
    fn pose_at(&mut self, t_ms: f64) -> Result<Pose> {
        Ok(generate(self, t_ms))
    }

    fn extends_backwards(&self) -> bool {
        true
    }
}

impl PoseSource for Session {
    fn pose_at(&mut self, t_ms: f64) -> Result<Pose> {
        self.target_at(t_ms).ok_or(Error::NotEnoughData {
            needed: 1,
            available: 0,
        })
    }
}

impl<S: PoseSource + ?Sized> PoseSource for Box<S> {
    fn pose_at(&mut self, t_ms: f64) -> Result<Pose> {
        (**self).pose_at(t_ms)
    }

    fn extends_backwards(&self) -> bool {
        (**self).extends_backwards()
    }
}

impl<S: PoseSource + ?Sized> PoseSource for &mut S {
    fn pose_at(&mut self, t_ms: f64) -> Result<Pose> {
        (**self).pose_at(t_ms)
    }

    fn extends_backwards(&self) -> bool {
        (**self).extends_backwards()
    }
}
