use std::collections::VecDeque;

use crate::base::{Pose, POSE_DIM};
use crate::error::{Error, Result};

/// Sliding window of recent operator samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    window_ms: f64,
    samples: VecDeque<(f64, Pose)>,
}

impl HistoryBuffer {
    pub fn new(window_ms: f64) -> Self {
        Self {
            window_ms,
            samples: VecDeque::new(),
        }
    }

    pub fn window_ms(&self) -> f64 {
        self.window_ms
    }

    /// Appends a sample and evicts everything older than `t_ms - window`.
    pub fn push(&mut self, t_ms: f64, pose: Pose) -> Result<()> {
        if let Some((last, _)) = self.samples.back() {
            if t_ms <= *last {
                return Err(Error::config(format!(
                    "history timestamps must increase: {t_ms} after {last}"
                )));
            }
        }
        self.samples.push_back((t_ms, pose));
        while self
            .samples
            .front()
            .is_some_and(|(t, _)| t_ms - *t > self.window_ms + 1e-9)
        {
            self.samples.pop_front();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn latest(&self) -> Option<&(f64, Pose)> {
        self.samples.back()
    }

    pub fn span_ms(&self) -> f64 {
        match (self.samples.front(), self.samples.back()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0.0,
        }
    }

    /// Mean spacing between samples, if there are at least two.
    pub fn sample_period_ms(&self) -> Option<f64> {
        (self.samples.len() >= 2).then(|| self.span_ms() / (self.samples.len() - 1) as f64)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, Pose)> {
        self.samples.iter()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|(t, _)| *t).collect()
    }

    /// One pose component as a time series, oldest first.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        assert!(axis < POSE_DIM);
        self.samples.iter().map(|(_, p)| p.to_array()[axis]).collect()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}
