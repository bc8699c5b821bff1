use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::session::{sample_stream, Session};
use super::shape::{ShapeKind, ShapeSpec};
use crate::error::{Error, Result};

/// How scripted operator repetitions differ from one another.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub shapes: Vec<ShapeKind>,
    pub runs_per_shape: usize,
    pub rate_hz: f64,
    pub duration_ms: f64,
    /// Std of per-sample positional tremor (m).
    pub tremor_std: f64,
    /// Relative spread of traversal speed across runs.
    pub speed_spread: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            shapes: ShapeKind::TRAINING.to_vec(),
            runs_per_shape: 150,
            rate_hz: super::DEFAULT_RATE_HZ,
            duration_ms: 20_000.0,
            tremor_std: 0.0,
            speed_spread: 0.1,
            seed: 0,
        }
    }
}

/// Path of one run inside a corpus directory: `<root>/<shape>/run_<id>.csv`.
pub fn run_path(root: &Path, kind: ShapeKind, run: usize) -> PathBuf {
    root.join(kind.name()).join(format!("run_{run:03}.csv"))
}

/// One scripted repetition: calibration shape with a random starting phase
/// and a perturbed speed.
pub fn scripted_run(kind: ShapeKind, spec: &CorpusSpec, rng: &mut impl Rng) -> Result<Session> {
    let shape = scripted_shape(kind, spec.speed_spread, rng);
    let mut session = sample_stream(&shape, spec.rate_hz, spec.duration_ms)?;
    if spec.tremor_std > 0.0 {
        let noise = Normal::new(0.0, spec.tremor_std).map_err(|e| Error::config(e.to_string()))?;
        for s in &mut session.samples {
            for c in &mut s.target.position {
                *c += noise.sample(rng);
            }
        }
    }
    Ok(session)
}

/// Calibration shape with a uniform random phase and its speed scaled by a
/// factor drawn from `[1 - speed_spread, 1 + speed_spread)`.
pub fn scripted_shape(kind: ShapeKind, speed_spread: f64, rng: &mut impl Rng) -> ShapeSpec {
    let mut shape = ShapeSpec::calibration(kind).with_phase(rng.random_range(0.0..std::f64::consts::TAU));
    if speed_spread > 0.0 {
        shape.period /= 1.0 + rng.random_range(-speed_spread..speed_spread);
    }
    shape
}

/// Writes `runs_per_shape` sessions for every shape under `root`.
pub fn write_corpus(root: &Path, spec: &CorpusSpec) -> Result<Vec<PathBuf>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut written = Vec::new();
    for &kind in &spec.shapes {
        for run in 0..spec.runs_per_shape {
            let path = run_path(root, kind, run);
            scripted_run(kind, spec, &mut rng)?.record(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Loads every `run_*.csv` under `<root>/<shape>/`, sorted by file name.
pub fn load_shape_runs(root: &Path, kind: ShapeKind) -> Result<Vec<Session>> {
    let dir = root.join(kind.name());
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("run_"))
        })
        .collect();
    paths.sort();
    paths.iter().map(Session::load).collect()
}
