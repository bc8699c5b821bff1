//! JSON messages exchanged with an operator console over `/session`.
//!
//! Every message is an object with `kind`, `seq`, optional `t_client` and
//! `t_server` stamps (ms) and a kind-specific `payload`:
//!
//! ```json
//! {"kind":"pose_input","seq":7,"t_client":58.333,
//!  "payload":{"position":[0.01,0.0,0.0],"orientation":[0,0,0,1]}}
//! ```

use serde::{Deserialize, Serialize};

use super::pipeline::LinkDelays;
use crate::base::{Pose, WorkspaceMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingAction {
    Start,
    Pause,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingState {
    Idle,
    Training,
    Paused,
    Stopped,
    /// The pipeline is starved of operator input.
    Waiting,
    Error,
}

fn identity() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum WireBody {
    /// Operator device pose; requires `t_client`.
    PoseInput {
        position: [f64; 3],
        #[serde(default = "identity")]
        orientation: [f64; 4],
    },
    FrameState {
        t_ms: f64,
        frame_id: u64,
        twin: Pose,
        plant: Pose,
    },
    LatencyUpdate {
        t_ms: f64,
        t_r_ms: f64,
        t_v_ms: f64,
        h_r_ms: u32,
        h_v_ms: u32,
    },
    MetricsUpdate {
        episode: u64,
        e_v: f64,
        e_r: f64,
        combined: f64,
        t_r_ms: f64,
        t_v_ms: f64,
    },
    TrainingCommand {
        action: TrainingAction,
    },
    TrainingStatus {
        state: TrainingState,
        episode: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smoothed_reward: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h_r_ms: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h_v_ms: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        /// Identifier of a checkpoint written on stop.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        checkpoint: Option<String>,
    },
    SessionConfig {
        config_hash: String,
        policy: String,
        operator_hz: f64,
        decision_hz: f64,
        duration_ms: f64,
        warmup_ms: f64,
        max_horizon_ms: u32,
        delay: LinkDelays,
        workspace: WorkspaceMap,
    },
}

impl WireBody {
    pub fn status(state: TrainingState, episode: u64) -> Self {
        WireBody::TrainingStatus {
            state,
            episode,
            smoothed_reward: None,
            h_r_ms: None,
            h_v_ms: None,
            reason: None,
            checkpoint: None,
        }
    }

    pub fn error(episode: u64, reason: impl Into<String>) -> Self {
        WireBody::TrainingStatus {
            state: TrainingState::Error,
            episode,
            smoothed_reward: None,
            h_r_ms: None,
            h_v_ms: None,
            reason: Some(reason.into()),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_client: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_server: Option<f64>,
    #[serde(flatten)]
    pub body: WireBody,
}

impl WireMessage {
    pub fn parse(text: &str) -> Result<Self> {
        let msg: WireMessage = serde_json::from_str(text)?;
        if matches!(msg.body, WireBody::PoseInput { .. }) && msg.t_client.is_none() {
            return Err(Error::config("pose_input without t_client"));
        }
        Ok(msg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// The operator pose carried by a `pose_input`.
    pub fn pose(&self) -> Option<Result<(f64, Pose)>> {
        match (&self.body, self.t_client) {
            (WireBody::PoseInput { position, orientation }, Some(t)) => Some(Pose::new(*position, *orientation).map(|p| (t, p))),
            _ => None,
        }
    }
}

/// Issues strictly increasing sequence numbers for one direction.
#[derive(Debug, Default)]
pub struct Sequencer {
    next: u64,
}

impl Sequencer {
    pub fn stamp(&mut self, body: WireBody, t_server: f64) -> WireMessage {
        let seq = self.next;
        self.next += 1;
        WireMessage {
            seq,
            t_client: None,
            t_server: Some(t_server),
            body,
        }
    }
}

/// Accepts only strictly increasing sequence numbers from the peer.
#[derive(Debug, Default)]
pub struct SeqGuard {
    last: Option<u64>,
}

impl SeqGuard {
    pub fn accept(&mut self, seq: u64) -> bool {
        if self.last.is_some_and(|l| seq <= l) {
            return false;
        }
        self.last = Some(seq);
        true
    }
}
