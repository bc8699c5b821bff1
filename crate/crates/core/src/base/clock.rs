use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Simulation time in integer microseconds since the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Micros(pub i64);

impl Micros {
    pub const ZERO: Micros = Micros(0);

    pub fn from_ms(ms: f64) -> Self {
        Micros((ms * 1000.0).round() as i64)
    }

    pub fn from_secs(s: f64) -> Self {
        Micros((s * 1e6).round() as i64)
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Time of tick `index` on a grid of `rate_hz`, rounded to the microsecond.
    pub fn grid(index: i64, rate_hz: f64) -> Self {
        Micros((index as f64 * 1e6 / rate_hz).round() as i64)
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0 + rhs.0)
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 += rhs.0;
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ms", self.as_ms())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    #[default]
    Virtual,
    Realtime,
}

/// Monotone clock owned by the scheduler.
///
/// In virtual mode time only moves through [`VirtualClock::advance_to`]; in
/// realtime mode [`VirtualClock::wall_now`] reads elapsed wall time and the
/// scheduler advances to it.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now: Micros,
    mode: ClockMode,
    started: Instant,
}

impl VirtualClock {
    pub fn new(mode: ClockMode) -> Self {
        Self {
            now: Micros::ZERO,
            mode,
            started: Instant::now(),
        }
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    /// Moves time forward. Returns `false` and leaves the clock untouched when
    /// `t` lies in the past.
    pub fn advance_to(&mut self, t: Micros) -> bool {
        if t < self.now {
            return false;
        }
        self.now = t;
        true
    }

    pub fn wall_now(&self) -> Micros {
        Micros(self.started.elapsed().as_micros() as i64)
    }
}
