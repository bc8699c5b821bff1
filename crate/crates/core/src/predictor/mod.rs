//! Per-axis ARMA forecasting of operator poses for two horizons.

mod arma;
mod history;

pub use arma::{ar_is_stationary, max_root_modulus, dual_predict, fit, predict_recursive, ArmaModel, AxisCoefficients};
pub use history::HistoryBuffer;

use serde::{Deserialize, Serialize};

use crate::base::Pose;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub p: usize,
    pub q: usize,
    /// Sliding history window W_p (ms).
    pub window_ms: f64,
    /// Minimum virtual time between refits (ms).
    pub refit_ms: f64,
    /// Largest admissible horizon H_max (ms).
    pub max_horizon_ms: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            p: 4,
            q: 2,
            window_ms: 4000.0,
            refit_ms: 250.0,
            max_horizon_ms: 1000.0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 && self.q == 0 {
            return Err(Error::config("predictor needs p + q > 0"));
        }
        for (name, v) in [
            ("window_ms", self.window_ms),
            ("refit_ms", self.refit_ms),
            ("max_horizon_ms", self.max_horizon_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("predictor {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Extension point for pose forecasters used by the operator stage.
pub trait Forecaster {
    fn observe(&mut self, t_ms: f64, pose: Pose) -> Result<()>;

    /// `(p̂_r, p̂_v)` for the control and visual horizons.
    fn predict_pair(&mut self, h_r_ms: f64, h_v_ms: f64) -> Result<(Pose, Pose)>;
}

/// Windowed ARMA forecaster that refits on a fixed cadence.
#[derive(Debug, Clone)]
pub struct ArmaForecaster {
    cfg: PredictorConfig,
    history: HistoryBuffer,
    model: Option<ArmaModel>,
    fits: usize,
}

impl ArmaForecaster {
    pub fn new(cfg: PredictorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            history: HistoryBuffer::new(cfg.window_ms),
            cfg,
            model: None,
            fits: 0,
        })
    }

    pub fn history(&self) -> &HistoryBuffer {
        &self.history
    }

    pub fn model(&self) -> Option<&ArmaModel> {
        self.model.as_ref()
    }

    pub fn fit_count(&self) -> usize {
        self.fits
    }

    fn refit_if_due(&mut self) -> Result<()> {
        let Some(&(now, _)) = self.history.latest() else {
            return Ok(());
        };
        let due = self
            .model
            .as_ref()
            .is_none_or(|m| now - m.fitted_until_ms() >= self.cfg.refit_ms - 1e-9);
        if !due {
            return Ok(());
        }
        match fit(&self.history, self.cfg.p, self.cfg.q, self.cfg.max_horizon_ms) {
            Ok(m) => {
                self.model = Some(m);
                self.fits += 1;
                Ok(())
            }
            // Too little history yet: keep forecasting with the last-value rule.
            Err(Error::NotEnoughData { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    }
}

impl Forecaster for ArmaForecaster {
    fn observe(&mut self, t_ms: f64, pose: Pose) -> Result<()> {
        self.history.push(t_ms, pose)
    }

    fn predict_pair(&mut self, h_r_ms: f64, h_v_ms: f64) -> Result<(Pose, Pose)> {
        let max = self.cfg.max_horizon_ms;
        for h in [h_r_ms, h_v_ms] {
            if !(0.0..=max).contains(&h) {
                return Err(Error::HorizonOutOfRange {
                    horizon_ms: h,
                    max_ms: max,
                });
            }
        }
        self.refit_if_due()?;
        match &self.model {
            Some(m) => dual_predict(m, &self.history, h_r_ms, h_v_ms),
            None => {
                let (_, latest) = *self.history.latest().ok_or(Error::NotEnoughData {
                    needed: 1,
                    available: 0,
                })?;
                Ok((latest, latest))
            }
        }
    }
}
