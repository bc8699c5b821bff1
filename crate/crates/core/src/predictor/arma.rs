use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use super::history::HistoryBuffer;
use crate::base::{Pose, POSE_DIM};
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest mark a regression as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;
/// Cut-off for the pseudo-inverse used once no MA terms remain.
const PINV_TOL: f64 = 1e-13;
/// An intercept is kept only if it lowers the SSE by more than this fraction.
const INTERCEPT_GAIN: f64 = 1e-6;
/// ...and by more than this fraction of the series energy, so that fits
/// which are already exact stay intercept-free.
const INTERCEPT_FLOOR: f64 = 1e-14;
/// Fits whose companion roots exceed `1 + EXPLOSIVE_MARGIN` in modulus are
/// refitted with a lower AR order; recursing them over a long horizon
/// diverges.
const EXPLOSIVE_MARGIN: f64 = 1e-3;
/// AR roots must sit this far inside the unit circle (companion form) to
/// count as stationary.
const STATIONARITY_MARGIN: f64 = 1e-6;

/// Coefficients of one pose component:
/// `x_t = c + Σ φ_a x_{t-a} + Σ θ_b ε_{t-b} + ε_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisCoefficients {
    pub c: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub stationary: bool,
}

impl AxisCoefficients {
    fn one_step(&self, past: &[f64], past_eps: &[f64]) -> f64 {
        // `past` and `past_eps` are newest-last.
        let mut v = self.c;
        for (a, phi) in self.phi.iter().enumerate() {
            v += phi * past[past.len() - 1 - a];
        }
        for (b, theta) in self.theta.iter().enumerate() {
            v += theta * past_eps[past_eps.len() - 1 - b];
        }
        v
    }
}

/// Per-axis ARMA model fitted on a history window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub sample_period_ms: f64,
    pub max_horizon_ms: f64,
    pub axes: Vec<AxisCoefficients>,
    /// Newest-last in-sample residuals per axis, `q` of them, aligned with the
    /// last sample used in the fit.
    residuals: Vec<Vec<f64>>,
    fitted_until_ms: f64,
}

impl ArmaModel {
    pub fn fitted_until_ms(&self) -> f64 {
        self.fitted_until_ms
    }

    pub fn residuals(&self, axis: usize) -> &[f64] {
        &self.residuals[axis]
    }

    pub fn is_stationary(&self) -> bool {
        self.axes.iter().all(|a| a.stationary)
    }

    /// Forecast path of every axis for steps `0..=steps` after the newest
    /// sample in `h` (step 0 is that sample).
    pub fn forecast_path(&self, h: &HistoryBuffer, steps: usize) -> Result<Vec<[f64; POSE_DIM]>> {
        let times = h.times();
        let n = times.len();
        let need = self.p.max(1);
        if n < need {
            return Err(Error::NotEnoughData {
                needed: need,
                available: n,
            });
        }
        let mut out = vec![[0.0; POSE_DIM]; steps + 1];
        for (axis, coef) in self.axes.iter().enumerate() {
            let x = h.axis(axis);
            let eps = self.current_residuals(axis, coef, &x, &times);
            let mut vals: Vec<f64> = x[n.saturating_sub(coef.phi.len().max(1))..].to_vec();
            let mut errs = eps;
            out[0][axis] = x[n - 1];
            for step in out.iter_mut().skip(1) {
                let v = coef.one_step(&vals, &errs);
                vals.push(v);
                errs.push(0.0);
                step[axis] = v;
            }
        }
        Ok(out)
    }

    /// Residuals aligned with the newest sample of `x`, rolling the fit-time
    /// residuals forward over samples that arrived after the fit.
    fn current_residuals(&self, axis: usize, coef: &AxisCoefficients, x: &[f64], times: &[f64]) -> Vec<f64> {
        let q = coef.theta.len();
        let mut eps = self.residuals[axis].clone();
        if eps.len() < q {
            let mut padded = vec![0.0; q - eps.len()];
            padded.extend(eps);
            eps = padded;
        }
        let first_new = times.partition_point(|t| *t <= self.fitted_until_ms + 1e-9);
        let p = coef.phi.len();
        for t in first_new.max(p)..x.len() {
            let pred = coef.one_step(&x[t - p..t], &eps);
            eps.push(x[t] - pred);
        }
        let keep = eps.len().saturating_sub(q);
        eps.split_off(keep)
    }
}

/// Fits a per-axis ARMA(p, q) model on `h` by the Hannan–Rissanen scheme.
///
/// Stage one fits a long AR model and keeps its residuals as innovation
/// proxies; stage two regresses each sample on `p` lagged values and `q`
/// lagged proxies. When that design is rank deficient the MA order of the
/// axis is reduced until it is not; at `q = 0` the minimum-norm solution is
/// used.
pub fn fit(h: &HistoryBuffer, p: usize, q: usize, max_horizon_ms: f64) -> Result<ArmaModel> {
    let needed = 10 * (p + q + 1);
    if h.len() < needed {
        return Err(Error::NotEnoughData {
            needed,
            available: h.len(),
        });
    }
    let sample_period_ms = h.sample_period_ms().ok_or(Error::NotEnoughData {
        needed: 2,
        available: h.len(),
    })?;
    let mut axes = Vec::with_capacity(POSE_DIM);
    let mut residuals = Vec::with_capacity(POSE_DIM);
    for axis in 0..POSE_DIM {
        let (coef, eps) = fit_axis(&h.axis(axis), p, q)?;
        let keep = eps.len().saturating_sub(coef.theta.len());
        residuals.push(eps[keep..].to_vec());
        axes.push(coef);
    }
    Ok(ArmaModel {
        p,
        q,
        sample_period_ms,
        max_horizon_ms,
        axes,
        residuals,
        fitted_until_ms: h.latest().map(|(t, _)| *t).unwrap_or(0.0),
    })
}

struct Solution {
    coef: DVector<f64>,
    sse: f64,
    deficient: bool,
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Solution> {
    if a.ncols() == 0 {
        return Ok(Solution {
            coef: DVector::zeros(0),
            sse: b.norm_squared(),
            deficient: false,
        });
    }
    // Reduce the tall design to its square triangular factor first; the SVD
    // then runs on a k×k matrix with the same singular values.
    let k = a.ncols();
    let (r, qtb) = if a.nrows() > k {
        let qr = a.clone().qr();
        let mut qtb = b.clone();
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, k).into_owned())
    } else {
        (a.clone(), b.clone())
    };
    let svd = r
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or(Error::SingularRegression)?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let deficient = smax == 0.0 || smin < RANK_TOL * smax;
    let coef = svd
        .solve(&qtb, PINV_TOL * smax)
        .map_err(|_| Error::SingularRegression)?;
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularRegression);
    }
    let sse = (a * &coef - b).norm_squared();
    Ok(Solution { coef, sse, deficient })
}

/// Residuals of an OLS AR(m) fit, zero for the first `m` samples.
fn long_ar_residuals(x: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let rows = n - m;
    let a = DMatrix::from_fn(rows, m + 1, |r, c| if c == 0 { 1.0 } else { x[m + r - c] });
    let b = DVector::from_fn(rows, |r, _| x[m + r]);
    let sol = least_squares(&a, &b)?;
    let fitted = &a * &sol.coef;
    let mut eps = vec![0.0; n];
    for r in 0..rows {
        eps[m + r] = b[r] - fitted[r];
    }
    Ok(eps)
}

fn fit_axis(x: &[f64], p: usize, q_max: usize) -> Result<(AxisCoefficients, Vec<f64>)> {
    let n = x.len();
    // Work relative to the newest value; the intercept absorbs the shift.
    let shift = x[n - 1];
    let xs: Vec<f64> = x.iter().map(|v| v - shift).collect();
    if xs.iter().all(|v| *v == 0.0) {
        let coef = AxisCoefficients {
            c: 0.0,
            phi: vec![1.0],
            theta: Vec::new(),
            stationary: false,
        };
        return Ok((coef, vec![0.0; n]));
    }
    let long_order = (2 * (p + q_max)).max(8).min(n / 4);

    let mut q = q_max;
    let mut p = p;
    let eps_proxy = if q_max > 0 {
        long_ar_residuals(&xs, long_order)?
    } else {
        vec![0.0; n]
    };
    let (c, phi, theta) = loop {
        let start = if q > 0 { p.max(long_order + q) } else { p };
        let rows = n - start;
        let lagged = |r: usize, col: usize| -> f64 {
            let t = start + r;
            if col < p {
                xs[t - 1 - col]
            } else {
                eps_proxy[t - 1 - (col - p)]
            }
        };
        let b = DVector::from_fn(rows, |r, _| xs[start + r]);
        let bare = DMatrix::from_fn(rows, p + q, &lagged);
        let with_c = DMatrix::from_fn(rows, p + q + 1, |r, col| {
            if col == 0 {
                1.0
            } else {
                lagged(r, col - 1)
            }
        });
        let s0 = least_squares(&bare, &b)?;
        let s1 = least_squares(&with_c, &b)?;
        let floor = INTERCEPT_FLOOR * x[start..].iter().map(|v| v * v).sum::<f64>();
        let use_c = s0.sse - s1.sse > INTERCEPT_GAIN * s0.sse + floor;
        let chosen = if use_c { &s1 } else { &s0 };
        if q > 0 && chosen.deficient {
            q -= 1;
            continue;
        }
        let off = usize::from(use_c);
        let c = if use_c { chosen.coef[0] } else { 0.0 };
        let phi: Vec<f64> = (0..p).map(|i| chosen.coef[off + i]).collect();
        let theta: Vec<f64> = (0..q).map(|i| chosen.coef[off + p + i]).collect();
        // Residual recursion ε_t = … − Σθ ε_{t−i} must be stable.
        let neg_theta: Vec<f64> = theta.iter().map(|t| -t).collect();
        if q > 0 && max_root_modulus(&neg_theta) >= 1.0 - STATIONARITY_MARGIN {
            q -= 1;
            continue;
        }
        if max_root_modulus(&phi) > 1.0 + EXPLOSIVE_MARGIN {
            if p > 1 {
                p -= 1;
                continue;
            }
            // Even AR(1) diverges: hold the last value.
            break (0.0, vec![1.0], Vec::new());
        }
        break (c, phi, theta);
    };

    // Undo the shift: x - s = c' + Σφ (x_lag - s)  ⇒  c = c' + s (1 - Σφ).
    let c = c + shift * (1.0 - phi.iter().sum::<f64>());
    let coef = AxisCoefficients {
        stationary: ar_is_stationary(&phi),
        c,
        phi,
        theta,
    };

    // In-sample one-step residuals on the original series.
    let p = coef.phi.len();
    let q = coef.theta.len();
    let mut eps = vec![0.0; n];
    for t in p..n {
        let window = &eps[t.saturating_sub(q)..t];
        let padded: Vec<f64> = std::iter::repeat_n(0.0, q - window.len()).chain(window.iter().copied()).collect();
        eps[t] = x[t] - coef.one_step(&x[t - p..t], &padded);
    }
    if eps.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numerical("ARMA residuals"));
    }
    Ok((coef, eps))
}

/// Largest modulus among the roots of the companion matrix of `phi`
/// (infinite if the eigenvalue iteration fails).
pub fn max_root_modulus(phi: &[f64]) -> f64 {
    let p = phi.len();
    if p == 0 {
        return 0.0;
    }
    let companion = DMatrix::from_fn(p, p, |r, c| {
        if r == 0 {
            phi[c]
        } else if r == c + 1 {
            1.0
        } else {
            0.0
        }
    });
    match Schur::try_new(companion, f64::EPSILON, 10_000) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}

/// True when every root of the companion matrix lies strictly inside the
/// unit circle (equivalently, the AR polynomial roots lie outside it).
pub fn ar_is_stationary(phi: &[f64]) -> bool {
    max_root_modulus(phi) < 1.0 - STATIONARITY_MARGIN
}

fn check_horizon(horizon_ms: f64, max_ms: f64) -> Result<()> {
    if !(0.0..=max_ms).contains(&horizon_ms) {
        return Err(Error::HorizonOutOfRange { horizon_ms, max_ms });
    }
    Ok(())
}

fn pose_on_path(path: &[[f64; POSE_DIM]], steps: f64, latest: &Pose) -> Pose {
    let lo = steps.floor() as usize;
    let hi = (steps.ceil() as usize).min(path.len() - 1);
    let w = steps - lo as f64;
    let v: [f64; POSE_DIM] = std::array::from_fn(|i| path[lo][i] + w * (path[hi][i] - path[lo][i]));
    Pose::from_array_or(v, latest)
}

/// Forecast `horizon_ms` ahead of the newest sample by recursive one-step
/// prediction, future innovations set to zero. Horizons that are not a whole
/// number of sample periods are interpolated between neighbouring steps.
pub fn predict_recursive(m: &ArmaModel, h: &HistoryBuffer, horizon_ms: f64) -> Result<Pose> {
    check_horizon(horizon_ms, m.max_horizon_ms)?;
    let (_, latest) = *h.latest().ok_or(Error::NotEnoughData {
        needed: 1,
        available: 0,
    })?;
    if horizon_ms == 0.0 {
        return Ok(latest);
    }
    let steps = horizon_ms / m.sample_period_ms;
    let path = m.forecast_path(h, steps.ceil() as usize)?;
    Ok(pose_on_path(&path, steps, &latest))
}

/// Forecasts for the control loop (`h_r_ms`) and the visual loop (`h_v_ms`)
/// from one recursion.
pub fn dual_predict(m: &ArmaModel, h: &HistoryBuffer, h_r_ms: f64, h_v_ms: f64) -> Result<(Pose, Pose)> {
    check_horizon(h_r_ms, m.max_horizon_ms)?;
    check_horizon(h_v_ms, m.max_horizon_ms)?;
    let (_, latest) = *h.latest().ok_or(Error::NotEnoughData {
        needed: 1,
        available: 0,
    })?;
    let sr = h_r_ms / m.sample_period_ms;
    let sv = h_v_ms / m.sample_period_ms;
    let path = m.forecast_path(h, sr.max(sv).ceil() as usize)?;
    let at = |steps: f64| {
        if steps == 0.0 {
            latest
        } else {
            pose_on_path(&path, steps, &latest)
        }
    };
    Ok((at(sr), at(sv)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history_of(series: impl Fn(usize) -> f64, n: usize) -> HistoryBuffer {
        let mut h = HistoryBuffer::new(1e9);
        for i in 0..n {
            h.push(i as f64 * 10.0, Pose::from_position([series(i), 0.0, 0.0])).unwrap();
        }
        h
    }

    #[test]
    fn constant_series_is_exact() {
        let h = history_of(|_| 0.37, 100);
        for (p, q) in [(1, 0), (2, 1), (4, 2)] {
            let m = fit(&h, p, q, 1000.0).unwrap();
            let next = predict_recursive(&m, &h, 10.0).unwrap();
            assert!((next.position[0] - 0.37).abs() < 1e-9, "p={p} q={q}");
        }
    }

    #[test]
    fn ramp_gives_linear_extrapolator() {
        let h = history_of(|i| 0.2 + 0.003 * i as f64, 80);
        let m = fit(&h, 2, 0, 1000.0).unwrap();
        let phi = &m.axes[0].phi;
        assert!((phi[0] - 2.0).abs() < 1e-6 && (phi[1] + 1.0).abs() < 1e-6, "{phi:?}");
        let ahead = predict_recursive(&m, &h, 70.0).unwrap();
        assert!((ahead.position[0] - (0.2 + 0.003 * 86.0)).abs() < 1e-9);
    }

    #[test]
    fn horizon_zero_and_out_of_range() {
        let h = history_of(|i| (i as f64 * 0.1).sin(), 100);
        let m = fit(&h, 4, 2, 1000.0).unwrap();
        assert_eq!(predict_recursive(&m, &h, 0.0).unwrap(), h.latest().unwrap().1);
        assert!(matches!(
            predict_recursive(&m, &h, 1000.5),
            Err(Error::HorizonOutOfRange { .. })
        ));
        assert!(predict_recursive(&m, &h, -1.0).is_err());
    }

    #[test]
    fn not_enough_data() {
        let h = history_of(|i| i as f64, 69);
        assert!(matches!(
            fit(&h, 4, 2, 1000.0),
            Err(Error::NotEnoughData { needed: 70, available: 69 })
        ));
    }

    #[test]
    fn stationarity_flag() {
        assert!(ar_is_stationary(&[1.5, -0.7]));
        assert!(!ar_is_stationary(&[2.0, -1.0]));
        assert!(!ar_is_stationary(&[1.1]));
    }
}
