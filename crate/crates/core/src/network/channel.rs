use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::packet::TimedPacket;
use crate::base::Micros;
use crate::error::{Error, Result};

/// One-way transport delay model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelaySpec {
    Constant { ms: f64 },
    /// Normal delay truncated at zero by rejection.
    Normal { mean_ms: f64, std_ms: f64 },
    /// Step-hold replay of recorded `(send_ms, delay_ms)` points.
    Trace { points: Vec<(f64, f64)> },
}

impl Default for DelaySpec {
    fn default() -> Self {
        DelaySpec::Normal {
            mean_ms: 50.0,
            std_ms: 10.0,
        }
    }
}

impl DelaySpec {
    pub fn zero() -> Self {
        DelaySpec::Constant { ms: 0.0 }
    }

    /// Normal with the given moments; a zero std or zero mean with zero std
    /// collapses to a constant.
    pub fn normal(mean_ms: f64, std_ms: f64) -> Self {
        if std_ms == 0.0 {
            DelaySpec::Constant { ms: mean_ms }
        } else {
            DelaySpec::Normal { mean_ms, std_ms }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            DelaySpec::Constant { ms } if !ok(*ms) => Err(Error::config(format!("constant delay must be >= 0, got {ms}"))),
            DelaySpec::Normal { mean_ms, std_ms } if !(ok(*mean_ms) && ok(*std_ms)) => {
                Err(Error::config(format!("normal delay needs mean, std >= 0, got ({mean_ms}, {std_ms})")))
            }
            DelaySpec::Trace { points } => {
                if points.is_empty() {
                    return Err(Error::config("delay trace is empty"));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::config("delay trace send times must increase"));
                }
                if points.iter().any(|(_, d)| !ok(*d)) {
                    return Err(Error::config("delay trace has a negative delay"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Nominal mean delay (ms), used for reporting budgets.
    pub fn mean_ms(&self) -> f64 {
        match self {
            DelaySpec::Constant { ms } => *ms,
            DelaySpec::Normal { mean_ms, .. } => *mean_ms,
            DelaySpec::Trace { points } => points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64,
        }
    }

    /// Mean of the delay actually sampled. Differs from [`Self::mean_ms`]
    /// only for normals with noticeable mass below zero, which are truncated.
    pub fn expected_ms(&self) -> f64 {
        match self {
            DelaySpec::Normal { mean_ms, std_ms } if *std_ms > 0.0 => {
                // E[X | X ≥ 0] by Simpson integration of the density over
                // [max(0, μ-12σ), μ+12σ].
                let (mu, s) = (*mean_ms, *std_ms);
                let lo = (mu - 12.0 * s).max(0.0);
                let hi = mu + 12.0 * s;
                if hi <= lo {
                    return 0.0;
                }
                let n = 4000;
                let h = (hi - lo) / n as f64;
                let (mut mass, mut first) = (0.0, 0.0);
                for i in 0..=n {
                    let x = lo + i as f64 * h;
                    let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    let pdf = (-0.5 * ((x - mu) / s).powi(2)).exp();
                    mass += w * pdf;
                    first += w * x * pdf;
                }
                first / mass
            }
            other => other.mean_ms(),
        }
    }

    pub fn load_trace(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
        let mut points = Vec::new();
        for (i, row) in reader.deserialize::<(f64, f64)>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                reason: e.to_string(),
            })?;
            points.push(row);
        }
        let spec = DelaySpec::Trace { points };
        spec.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
        Ok(spec)
    }
}

/// Writes `(send_ms, delay_ms)` rows with a header.
pub fn write_trace(path: impl AsRef<Path>, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Io(e.into()))?;
    w.write_record(["send_ms", "delay_ms"]).map_err(|e| Error::Io(e.into()))?;
    for (s, d) in points {
        w.write_record([s.to_string(), d.to_string()]).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

struct InFlight<P> {
    deliver_at: Micros,
    seq: u64,
    pkt: TimedPacket<P>,
}

impl<P> PartialEq for InFlight<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.deliver_at, self.seq) == (other.deliver_at, other.seq)
    }
}
impl<P> Eq for InFlight<P> {}
impl<P> PartialOrd for InFlight<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for InFlight<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_at, self.seq).cmp(&(other.deliver_at, other.seq))
    }
}

/// A one-way link that delays every packet independently.
///
/// Packets may overtake one another; stale arrivals are for the receiving
/// buffer to resolve.
pub struct DelayChannel<P> {
    spec: DelaySpec,
    rng: ChaCha8Rng,
    in_flight: BinaryHeap<Reverse<InFlight<P>>>,
    seq: u64,
    recorded: Option<Vec<(f64, f64)>>,
}

impl<P> DelayChannel<P> {
    pub fn new(spec: DelaySpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            in_flight: BinaryHeap::new(),
            seq: 0,
            recorded: None,
        })
    }

    pub fn spec(&self) -> &DelaySpec {
        &self.spec
    }

    /// Keeps every sampled delay so the run can be replayed as a trace.
    pub fn record_delays(&mut self) {
        self.recorded.get_or_insert_with(Vec::new);
    }

    pub fn recorded_delays(&self) -> Option<&[(f64, f64)]> {
        self.recorded.as_deref()
    }

    pub fn sample_delay_ms(&mut self, send_ms: f64) -> f64 {
        match &self.spec {
            DelaySpec::Constant { ms } => *ms,
            DelaySpec::Normal { mean_ms, std_ms } => loop {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                let d = mean_ms + std_ms * z;
                if d >= 0.0 {
                    break d;
                }
            },
            DelaySpec::Trace { points } => {
                let i = points.partition_point(|(s, _)| *s <= send_ms);
                points[i.saturating_sub(1)].1
            }
        }
    }

    /// Schedules `pkt` for delivery; returns its delivery time.
    pub fn send(&mut self, pkt: TimedPacket<P>, now: Micros) -> Micros {
        let delay = self.sample_delay_ms(now.as_ms());
        if let Some(rec) = &mut self.recorded {
            rec.push((now.as_ms(), delay));
        }
        let deliver_at = now + Micros::from_ms(delay);
        self.seq += 1;
        self.in_flight.push(Reverse(InFlight {
            deliver_at,
            seq: self.seq,
            pkt,
        }));
        deliver_at
    }

    pub fn next_delivery(&self) -> Option<Micros> {
        self.in_flight.peek().map(|r| r.0.deliver_at)
    }

    /// Pops the earliest packet if it is due at `now`.
    pub fn pop_due(&mut self, now: Micros) -> Option<TimedPacket<P>> {
        if self.next_delivery()? <= now {
            self.in_flight.pop().map(|r| r.0.pkt)
        } else {
            None
        }
    }

    /// All packets due at `now`, in delivery order.
    pub fn deliver_due(&mut self, now: Micros) -> Vec<TimedPacket<P>> {
        std::iter::from_fn(|| self.pop_due(now)).collect()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_delay_delivers_at_send_instant() {
        let mut ch = DelayChannel::new(DelaySpec::zero(), 1).unwrap();
        assert_eq!(ch.send(TimedPacket::new(7, Micros(5)), Micros(5)), Micros(5));
        assert_eq!(ch.deliver_due(Micros(5)).len(), 1);
    }

    #[test]
    fn truncated_normal_moments() {
        let mut ch: DelayChannel<()> = DelayChannel::new(DelaySpec::normal(50.0, 10.0), 42).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|i| ch.sample_delay_ms(i as f64)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((48.5..=51.5).contains(&mean), "{mean}");
        assert!((8.5..=11.5).contains(&std), "{std}");
        assert!(xs.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn trace_replays_recorded_delays() {
        let mut a: DelayChannel<u32> = DelayChannel::new(DelaySpec::normal(30.0, 20.0), 3).unwrap();
        a.record_delays();
        let sends: Vec<Micros> = (0..50).map(|i| Micros(i * 8333)).collect();
        let first: Vec<Micros> = sends.iter().map(|t| a.send(TimedPacket::new(0, *t), *t)).collect();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace(&path, a.recorded_delays().unwrap()).unwrap();
        let mut b: DelayChannel<u32> = DelayChannel::new(DelaySpec::load_trace(&path).unwrap(), 99).unwrap();
        let second: Vec<Micros> = sends.iter().map(|t| b.send(TimedPacket::new(0, *t), *t)).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn overtaking_is_allowed() {
        let mut ch = DelayChannel::new(
            DelaySpec::Trace {
                points: vec![(0.0, 50.0), (10.0, 5.0)],
            },
            0,
        )
        .unwrap();
        ch.send(TimedPacket::new("slow", Micros(0)), Micros(0));
        ch.send(TimedPacket::new("fast", Micros::from_ms(10.0)), Micros::from_ms(10.0));
        let got: Vec<_> = ch.deliver_due(Micros::from_ms(60.0)).into_iter().map(|p| p.payload).collect();
        assert_eq!(got, ["fast", "slow"]);
    }
}
