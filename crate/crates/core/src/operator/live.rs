use std::collections::VecDeque;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::time::Duration;

use super::PoseSource;
use crate::base::Pose;
use crate::error::{Error, Result};

/// Producer half of a live pose feed, held by the network bridge.
#[derive(Debug, Clone)]
pub struct LiveSender {
    tx: SyncSender<(f64, Pose)>,
}

impl LiveSender {
    /// Queues one timestamped pose. Returns `false` when the pipeline side is
    /// gone or the queue is full (the sample is dropped; a newer one follows).
    pub fn push(&self, t_ms: f64, pose: Pose) -> bool {
        match self.tx.try_send((t_ms, pose)) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => false,
        }
    }
}

/// Consumer half: a pose source whose samples come from outside the process.
///
/// `pose_at(t)` returns the newest sample stamped at or before `t`, blocking
/// until the producer has reached `t`. If nothing arrives for `timeout` the
/// source reports starvation.
#[derive(Debug)]
pub struct LiveInput {
    rx: Receiver<(f64, Pose)>,
    queue: VecDeque<(f64, Pose)>,
    latest: Option<(f64, Pose)>,
    timeout: Duration,
}

pub fn live_channel(capacity: usize, timeout: Duration) -> (LiveSender, LiveInput) {
    let (tx, rx) = mpsc::sync_channel(capacity.max(1));
    (
        LiveSender { tx },
        LiveInput {
            rx,
            queue: VecDeque::new(),
            latest: None,
            timeout,
        },
    )
}

impl LiveInput {
    pub fn latest(&self) -> Option<Pose> {
        self.latest.map(|(_, p)| p)
    }

    fn starved(&self) -> Error {
        Error::Stage2Timeout {
            waited_ms: self.timeout.as_millis() as u64,
        }
    }
}

impl PoseSource for LiveInput {
    fn pose_at(&mut self, t_ms: f64) -> Result<Pose> {
        loop {
            while let Ok(s) = self.rx.try_recv() {
                self.queue.push_back(s);
            }
            while self.queue.front().is_some_and(|(ts, _)| *ts <= t_ms) {
                self.latest = self.queue.pop_front();
            }
            let caught_up = !self.queue.is_empty()
                || self.latest.is_some_and(|(ts, _)| ts >= t_ms);
            if let (true, Some((_, pose))) = (caught_up, self.latest) {
                return Ok(pose);
            }
            match self.rx.recv_timeout(self.timeout) {
                Ok(s) => self.queue.push_back(s),
                Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => {
                    return Err(self.starved())
                }
            }
        }
    }
}
