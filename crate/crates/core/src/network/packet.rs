use serde::{Deserialize, Serialize};

use crate::base::Micros;
use crate::error::{Error, Result};

/// Pipeline timestamps `t1..t10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// t1: operator sample taken and horizons chosen.
    Sampled,
    /// t2: control pose turned into axis targets at the edge.
    ControlSynthesized,
    /// t3: interpolated command leaves the edge.
    CommandSent,
    /// t4: visual pose applied to the twin.
    VisualSynthesized,
    /// t5: twin simulation step containing the update.
    Simulated,
    /// t6: frame rendered.
    Rendered,
    /// t7: frame streamed back to the operator.
    FrameSent,
    /// t8: command received by the plant.
    CommandReceived,
    /// t9: plant finished executing the command.
    Executed,
    /// t10: frame displayed to the operator.
    Displayed,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Sampled,
        Stage::ControlSynthesized,
        Stage::CommandSent,
        Stage::VisualSynthesized,
        Stage::Simulated,
        Stage::Rendered,
        Stage::FrameSent,
        Stage::CommandReceived,
        Stage::Executed,
        Stage::Displayed,
    ];

    /// Order of stages along the control loop.
    pub const CONTROL_PATH: [Stage; 5] = [
        Stage::Sampled,
        Stage::ControlSynthesized,
        Stage::CommandSent,
        Stage::CommandReceived,
        Stage::Executed,
    ];

    /// Order of stages along the visual loop.
    pub const VISUAL_PATH: [Stage; 6] = [
        Stage::Sampled,
        Stage::VisualSynthesized,
        Stage::Simulated,
        Stage::Rendered,
        Stage::FrameSent,
        Stage::Displayed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sampled => "sampled",
            Stage::ControlSynthesized => "control_synthesized",
            Stage::CommandSent => "command_sent",
            Stage::VisualSynthesized => "visual_synthesized",
            Stage::Simulated => "simulated",
            Stage::Rendered => "rendered",
            Stage::FrameSent => "frame_sent",
            Stage::CommandReceived => "command_received",
            Stage::Executed => "executed",
            Stage::Displayed => "displayed",
        }
    }
}

/// A payload tagged with the operator sample time it derives from and the
/// times it passed each pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedPacket<P> {
    pub payload: P,
    pub t_origin: Micros,
    stamps: [Option<Micros>; 10],
}

impl<P> TimedPacket<P> {
    pub fn new(payload: P, t_origin: Micros) -> Self {
        let mut stamps = [None; 10];
        stamps[Stage::Sampled.index()] = Some(t_origin);
        Self {
            payload,
            t_origin,
            stamps,
        }
    }

    /// Re-wraps a new payload, keeping origin and stamps.
    pub fn carry<Q>(&self, payload: Q) -> TimedPacket<Q> {
        TimedPacket {
            payload,
            t_origin: self.t_origin,
            stamps: self.stamps,
        }
    }

    pub fn stamp(&mut self, stage: Stage, t: Micros) {
        self.stamps[stage.index()] = Some(t);
    }

    pub fn stamped(mut self, stage: Stage, t: Micros) -> Self {
        self.stamp(stage, t);
        self
    }

    pub fn at(&self, stage: Stage) -> Option<Micros> {
        self.stamps[stage.index()]
    }

    pub fn require(&self, stage: Stage) -> Result<Micros> {
        self.at(stage).ok_or(Error::Instrumentation(stage.name()))
    }

    /// Latest stamp of any stage.
    pub fn latest_stamp(&self) -> Micros {
        self.stamps.iter().flatten().copied().max().unwrap_or(self.t_origin)
    }

    /// True when the stamps present along `path` never decrease.
    pub fn stamps_monotone(&self, path: &[Stage]) -> bool {
        let present: Vec<Micros> = path.iter().filter_map(|s| self.at(*s)).collect();
        present.windows(2).all(|w| w[0] <= w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamps_follow_path_order() {
        let p = TimedPacket::new((), Micros(10))
            .stamped(Stage::ControlSynthesized, Micros(30))
            .stamped(Stage::CommandSent, Micros(40));
        assert!(p.stamps_monotone(&Stage::CONTROL_PATH));
        let bad = p.clone().stamped(Stage::CommandReceived, Micros(35));
        assert!(!bad.stamps_monotone(&Stage::CONTROL_PATH));
        assert!(matches!(bad.require(Stage::Executed), Err(Error::Instrumentation("executed"))));
    }
}
