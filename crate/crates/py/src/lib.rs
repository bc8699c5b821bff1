use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use teleop_twin::harness::{self, ExperimentConfig, TimingConfig};
use teleop_twin::network::DelaySpec;
use teleop_twin::predictor::{fit, predict_recursive, HistoryBuffer};
use teleop_twin::Pose;

fn py_err(e: teleop_twin::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

pub fn default_config_toml(seed: u64) -> teleop_twin::Result<String> {
    ExperimentConfig::new(seed).to_toml()
}

/// Runs one episode and returns its summary as JSON.
pub fn run_json(config_toml: &str) -> teleop_twin::Result<String> {
    let cfg = ExperimentConfig::from_toml(config_toml)?;
    let (_, summary) = harness::run(&cfg)?;
    Ok(serde_json::to_string(&summary)?)
}

/// Fits an ARMA(p, q) model to a position history and forecasts
/// `horizon_ms` past the last sample.
pub fn forecast(times_ms: &[f64], positions: &[[f64; 3]], horizon_ms: f64, p: usize, q: usize) -> teleop_twin::Result<[f64; 3]> {
    if times_ms.len() != positions.len() {
        return Err(teleop_twin::Error::config(format!(
            "{} timestamps for {} positions",
            times_ms.len(),
            positions.len()
        )));
    }
    let mut h = HistoryBuffer::new(f64::INFINITY);
    for (t, x) in times_ms.iter().zip(positions) {
        h.push(*t, Pose::from_position(*x))?;
    }
    let m = fit(&h, p, q, horizon_ms.max(1.0))?;
    Ok(predict_recursive(&m, &h, horizon_ms)?.position)
}

/// Visual and control latency budgets (ms) when every link draws from
/// N(mean, std), with the default processing times.
pub fn budgets(mean_ms: f64, std_ms: f64) -> teleop_twin::Result<(f64, f64)> {
    let d = DelaySpec::normal(mean_ms, std_ms);
    d.validate()?;
    Ok(harness::latency_budgets(&d, &d, &d, &TimingConfig::default()))
}

#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn default_config(seed: u64) -> PyResult<String> {
    default_config_toml(seed).map_err(py_err)
}

#[pyfunction]
fn run(config_toml: &str) -> PyResult<String> {
    run_json(config_toml).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (times_ms, positions, horizon_ms, p = 4, q = 2))]
fn predict(times_ms: Vec<f64>, positions: Vec<[f64; 3]>, horizon_ms: f64, p: usize, q: usize) -> PyResult<[f64; 3]> {
    forecast(&times_ms, &positions, horizon_ms, p, q).map_err(py_err)
}

#[pyfunction]
fn latency_budgets(mean_ms: f64, std_ms: f64) -> PyResult<(f64, f64)> {
    budgets(mean_ms, std_ms).map_err(py_err)
}

#[pymodule]
fn teleop_twin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(latency_budgets, m)?)?;
    Ok(())
}
