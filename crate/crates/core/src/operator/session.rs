use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::shape::{generate, ShapeSpec};
use crate::base::Pose;
use crate::error::{Error, Result};

pub const TARGET_COLUMNS: [&str; 8] = ["t_ms", "tx", "ty", "tz", "tqx", "tqy", "tqz", "tqw"];
pub const ACTUAL_COLUMNS: [&str; 7] = ["ax", "ay", "az", "aqx", "aqy", "aqz", "aqw"];

/// Tolerance on grid spacing, in ms, when validating a loaded session.
const SPACING_TOL_MS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSample {
    pub t_ms: f64,
    pub target: Pose,
    pub actual: Option<Pose>,
}

/// A recorded operator stream: target poses on a fixed sampling grid, plus
/// the robot end-effector pose when it was captured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub rate_hz: f64,
    pub samples: Vec<SessionSample>,
}

impl Session {
    pub fn new(rate_hz: f64, samples: Vec<SessionSample>) -> Result<Self> {
        let s = Self { rate_hz, samples };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period_ms(&self) -> f64 {
        1000.0 / self.rate_hz
    }

    pub fn duration_ms(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t_ms - a.t_ms,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::config(format!("session rate must be > 0, got {}", self.rate_hz)));
        }
        let period = self.period_ms();
        for (i, w) in self.samples.windows(2).enumerate() {
            let dt = w[1].t_ms - w[0].t_ms;
            if dt <= 0.0 {
                return Err(Error::config(format!("timestamps not increasing at sample {}", i + 1)));
            }
            if (dt - period).abs() > SPACING_TOL_MS {
                return Err(Error::config(format!(
                    "sample {} is {dt} ms after its predecessor, expected {period}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Target pose at `t_ms`, linearly interpolated between samples and held
    /// constant outside the recorded span.
    pub fn target_at(&self, t_ms: f64) -> Option<Pose> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t_ms <= first.t_ms {
            return Some(first.target);
        }
        if t_ms >= last.t_ms {
            return Some(last.target);
        }
        let idx = ((t_ms - first.t_ms) / self.period_ms()).floor() as usize;
        let idx = idx.min(self.samples.len() - 2);
        let (a, b) = (&self.samples[idx], &self.samples[idx + 1]);
        let w = ((t_ms - a.t_ms) / (b.t_ms - a.t_ms)).clamp(0.0, 1.0);
        let va = a.target.to_array();
        let vb = b.target.to_array();
        let v: [f64; 7] = std::array::from_fn(|i| va[i] + w * (vb[i] - va[i]));
        Some(Pose::from_array_or(v, &a.target))
    }

    /// Writes the session as CSV with a header row.
    pub fn record(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut out = BufWriter::new(File::create(path)?);
        let with_actual = self.samples.iter().any(|s| s.actual.is_some());
        let mut header: Vec<&str> = TARGET_COLUMNS.to_vec();
        if with_actual {
            header.extend(ACTUAL_COLUMNS);
        }
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            // `{}` on f64 prints the shortest representation that parses back
            // to the same bits.
            write!(out, "{}", s.t_ms)?;
            for v in s.target.to_array() {
                write!(out, ",{v}")?;
            }
            if with_actual {
                match &s.actual {
                    Some(a) => {
                        for v in a.to_array() {
                            write!(out, ",{v}")?;
                        }
                    }
                    None => write!(out, "{}", ",".repeat(ACTUAL_COLUMNS.len()))?,
                }
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a session written by [`Session::record`]. The sampling rate is
    /// inferred from the timestamp span.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };

        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(parse_err(1, "empty file".into())),
        };
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let with_actual = if cols == TARGET_COLUMNS {
            false
        } else if cols.len() == 15 && cols[..8] == TARGET_COLUMNS && cols[8..] == ACTUAL_COLUMNS {
            true
        } else {
            return Err(parse_err(1, format!("unexpected header `{header}`")));
        };

        let mut samples: Vec<SessionSample> = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(parse_err(
                    line_no,
                    format!("expected {} fields, found {}", cols.len(), fields.len()),
                ));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("bad number `{}` in column {}", fields[i], cols[i])))
            };
            let t_ms = num(0)?;
            if let Some(prev) = samples.last() {
                if t_ms <= prev.t_ms {
                    return Err(parse_err(
                        line_no,
                        format!("timestamp {t_ms} does not increase (previous {})", prev.t_ms),
                    ));
                }
            }
            let pose_at = |start: usize| -> Result<Pose> {
                let v: [f64; 7] = [
                    num(start)?,
                    num(start + 1)?,
                    num(start + 2)?,
                    num(start + 3)?,
                    num(start + 4)?,
                    num(start + 5)?,
                    num(start + 6)?,
                ];
                Pose::from_array(v).map_err(|e| parse_err(line_no, e.to_string()))
            };
            let target = pose_at(1)?;
            let actual = if with_actual && fields[8..].iter().any(|f| !f.is_empty()) {
                Some(pose_at(8)?)
            } else {
                None
            };
            samples.push(SessionSample { t_ms, target, actual });
        }

        let rate_hz = match samples.len() {
            0 | 1 => crate::operator::DEFAULT_RATE_HZ,
            n => 1000.0 * (n - 1) as f64 / (samples[n - 1].t_ms - samples[0].t_ms),
        };
        let session = Session { rate_hz, samples };
        session
            .validate()
            .map_err(|e| parse_err(0, e.to_string()))?;
        Ok(session)
    }
}

/// Samples `shape` on the exact `rate_hz` grid for `duration_ms`.
pub fn sample_stream(shape: &ShapeSpec, rate_hz: f64, duration_ms: f64) -> Result<Session> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::config(format!("sampling rate must be > 0, got {rate_hz}")));
    }
    let n = (duration_ms.max(0.0) * rate_hz / 1000.0 + 1e-9).floor() as usize;
    let period = 1000.0 / rate_hz;
    let samples = (0..n)
        .map(|i| {
            let t_ms = i as f64 * period;
            SessionSample {
                t_ms,
                target: generate(shape, t_ms),
                actual: None,
            }
        })
        .collect();
    Ok(Session { rate_hz, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ShapeKind;

    fn circle() -> ShapeSpec {
        ShapeSpec::new(ShapeKind::Circle, 0.1, 8.0).unwrap()
    }

    #[test]
    fn sample_counts() {
        assert_eq!(sample_stream(&circle(), 120.0, 1000.0).unwrap().len(), 120);
        assert_eq!(sample_stream(&circle(), 120.0, 20_000.0).unwrap().len(), 2400);
        assert!(sample_stream(&circle(), 120.0, 0.0).unwrap().is_empty());
        assert!(sample_stream(&circle(), 0.0, 10.0).is_err());
    }

    #[test]
    fn round_trip_with_actual() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = sample_stream(&circle(), 120.0, 500.0).unwrap();
        for (i, sample) in s.samples.iter_mut().enumerate() {
            if i % 3 != 0 {
                let mut a = sample.target;
                a.position[0] += 1e-3;
                sample.actual = Some(a);
            }
        }
        let path = dir.path().join("nested/run.csv");
        s.record(&path).unwrap();
        let back = Session::load(&path).unwrap();
        assert_eq!(back.samples, s.samples);
        assert!((back.rate_hz - 120.0).abs() < 1e-9);
    }

    #[test]
    fn non_monotone_timestamps_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "t_ms,tx,ty,tz,tqx,tqy,tqz,tqw\n0,0,0,0,0,0,0,1\n8.3,0,0,0,0,0,0,1\n4,0,0,0,0,0,0,1\n",
        )
        .unwrap();
        match Session::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_number_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t_ms,tx,ty,tz,tqx,tqy,tqz,tqw\n0,0,zero,0,0,0,0,1\n").unwrap();
        assert!(matches!(Session::load(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn interpolated_target() {
        let s = sample_stream(&circle(), 120.0, 100.0).unwrap();
        let mid = s.target_at(0.5 * s.period_ms()).unwrap();
        let a = s.samples[0].target.position[1];
        let b = s.samples[1].target.position[1];
        assert!((mid.position[1] - 0.5 * (a + b)).abs() < 1e-15);
    }
}
