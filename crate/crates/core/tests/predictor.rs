use proptest::prelude::*;
use teleop_twin::operator::{generate, ShapeKind, ShapeSpec};
use teleop_twin::predictor::{dual_predict, fit, predict_recursive, HistoryBuffer};
use teleop_twin::Pose;

const PERIOD_MS: f64 = 1000.0 / 120.0;

fn scalar_history(xs: &[f64]) -> HistoryBuffer {
    let mut h = HistoryBuffer::new(1e12);
    for (i, x) in xs.iter().enumerate() {
        h.push(i as f64 * PERIOD_MS, Pose::from_position([*x, 0.0, 0.0])).unwrap();
    }
    h
}

fn shape_history(shape: &ShapeSpec, end_ms: f64, window_ms: f64) -> HistoryBuffer {
    let mut h = HistoryBuffer::new(window_ms);
    let n = (window_ms / PERIOD_MS).floor() as i64;
    for k in (0..=n).rev() {
        let t = end_ms - k as f64 * PERIOD_MS;
        h.push(t, generate(shape, t)).unwrap();
    }
    h
}

#[test]
fn recovers_generating_ar2_coefficients() {
    let mut xs = vec![1.0, 0.4];
    for t in 2..60 {
        xs.push(1.5 * xs[t - 1] - 0.7 * xs[t - 2]);
    }
    let m = fit(&scalar_history(&xs), 2, 0, 1000.0).unwrap();
    let phi = &m.axes[0].phi;
    assert!((phi[0] - 1.5).abs() < 1e-6, "{phi:?}");
    assert!((phi[1] + 0.7).abs() < 1e-6, "{phi:?}");
    assert!(m.axes[0].stationary);
}

#[test]
fn pure_ar_prediction_matches_direct_recursion() {
    let xs: Vec<f64> = (0..200)
        .map(|i| {
            let t = i as f64 * 0.05;
            0.1 * t.sin() + 0.03 * (2.3 * t).cos() + 0.002 * (17.0 * t).sin()
        })
        .collect();
    let h = scalar_history(&xs);
    let m = fit(&h, 3, 0, 1000.0).unwrap();
    let a = &m.axes[0];
    assert!(a.theta.is_empty());

    // Independent recursion written out longhand.
    let mut buf = xs.clone();
    for _ in 0..12 {
        let n = buf.len();
        let next = a.c + a.phi[0] * buf[n - 1] + a.phi[1] * buf[n - 2] + a.phi[2] * buf[n - 3];
        buf.push(next);
    }
    let got = predict_recursive(&m, &h, 12.0 * PERIOD_MS).unwrap();
    assert!((got.position[0] - buf[buf.len() - 1]).abs() < 1e-12);
}

#[test]
fn refit_is_idempotent() {
    let shape = ShapeSpec::calibration(ShapeKind::Pentagram);
    let h = shape_history(&shape, 7000.0, 4000.0);
    let a = fit(&h, 4, 2, 1000.0).unwrap();
    let b = fit(&h, 4, 2, 1000.0).unwrap();
    for (x, y) in a.axes.iter().zip(&b.axes) {
        assert!((x.c - y.c).abs() <= 1e-12);
        for (u, v) in x.phi.iter().chain(&x.theta).zip(y.phi.iter().chain(&y.theta)) {
            assert!((u - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn one_step_residuals_beat_last_value() {
    // Noisy AR(2) around a level, where both predictors are imperfect.
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut xs = vec![0.5, 0.5];
    for t in 2..400 {
        xs.push(0.5 + 1.2 * (xs[t - 1] - 0.5) - 0.4 * (xs[t - 2] - 0.5) + noise.sample(&mut rng));
    }
    let h = scalar_history(&xs);
    let m = fit(&h, 4, 2, 1000.0).unwrap();
    let start = 20;
    let mut model_sse = 0.0;
    let mut naive_sse = 0.0;
    let a = &m.axes[0];
    for t in start..xs.len() {
        let mut sub = HistoryBuffer::new(1e12);
        for (i, x) in xs[..t].iter().enumerate() {
            sub.push(i as f64 * PERIOD_MS, Pose::from_position([*x, 0.0, 0.0])).unwrap();
        }
        let pred = predict_recursive(&m, &sub, PERIOD_MS).unwrap().position[0];
        model_sse += (xs[t] - pred).powi(2);
        naive_sse += (xs[t] - xs[t - 1]).powi(2);
    }
    assert!(model_sse <= naive_sse, "model {model_sse} naive {naive_sse} coef {a:?}");
}

#[test]
fn dual_prediction_on_calibration_circle() {
    let shape = ShapeSpec::calibration(ShapeKind::Circle);
    let h = shape_history(&shape, 9000.0, 4000.0);
    let m = fit(&h, 4, 2, 1000.0).unwrap();
    let (pr, pv) = dual_predict(&m, &h, 127.0, 133.0).unwrap();
    assert!(pr.position_distance(&generate(&shape, 9127.0)) < 0.005);
    assert!(pv.position_distance(&generate(&shape, 9133.0)) < 0.005);

    let (a, b) = dual_predict(&m, &h, 400.0, 400.0).unwrap();
    assert_eq!(a, b);
    let (a, b) = dual_predict(&m, &h, 0.0, 0.0).unwrap();
    assert_eq!(a, h.latest().unwrap().1);
    assert_eq!(b, h.latest().unwrap().1);
}

#[test]
fn horizon_curve_is_monotone_on_average() {
    // Fifty phase-shifted runs per shape, horizons 100..=1000 ms.
    for kind in ShapeKind::TRAINING {
        let horizons: Vec<f64> = (1..=10).map(|k| k as f64 * 100.0).collect();
        let mut sq = vec![0.0; horizons.len()];
        let runs = 50;
        for run in 0..runs {
            let shape = ShapeSpec::calibration(kind).with_phase(run as f64 * 0.37);
            let end = 4000.0 + run as f64 * 97.0;
            let h = shape_history(&shape, end, 4000.0);
            let m = fit(&h, 4, 2, 1000.0).unwrap();
            for (i, hz) in horizons.iter().enumerate() {
                let p = predict_recursive(&m, &h, *hz).unwrap();
                sq[i] += p.position_distance(&generate(&shape, end + hz)).powi(2);
            }
        }
        let rmse: Vec<f64> = sq.iter().map(|s| (s / runs as f64).sqrt()).collect();
        assert!(rmse[9] < 0.01, "{kind}: {rmse:?}");
        let violations = rmse.windows(2).filter(|w| w[1] < w[0] * 0.95).count();
        assert!(violations == 0, "{kind}: {rmse:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forecast_quaternions_stay_unit(
        phase in 0.0..std::f64::consts::TAU,
        wobble in 0.0..0.3f64,
        horizon in 0.0..1000.0f64,
    ) {
        let mut h = HistoryBuffer::new(4000.0);
        for i in 0..300 {
            let t = i as f64 * PERIOD_MS;
            let a = phase + wobble * (t / 900.0).sin();
            let pose = Pose::new([a.cos() * 0.1, a.sin() * 0.1, 0.0], [0.0, 0.0, (a / 2.0).sin(), (a / 2.0).cos()]).unwrap();
            h.push(t, pose).unwrap();
        }
        let m = fit(&h, 4, 2, 1000.0).unwrap();
        let p = predict_recursive(&m, &h, horizon).unwrap();
        let n: f64 = p.orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-9);
        prop_assert!(p.orientation[3] >= 0.0);
    }
}
