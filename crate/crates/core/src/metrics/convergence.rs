/// First episode `k ≥ window` at which the mean of the next `window` rewards
/// differs from the mean of the previous `window` by less than `eps`, and
/// keeps doing so for every later start up to one window further on.
///
/// Returns `None` for series shorter than two windows.
pub fn detect_convergence(series: &[f64], window: usize, eps: f64) -> Option<usize> {
    let n = series.len();
    if window == 0 || n < 2 * window {
        return None;
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in series {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mean = |a: usize, b: usize| (prefix[b] - prefix[a]) / (b - a) as f64;
    let gap = |k: usize| (mean(k, k + window) - mean(k - window, k)).abs();
    let last = n - window;
    (window..=last).find(|&k| (k..=(k + window).min(last)).all(|j| gap(j) < eps))
}

/// Trailing moving average with a window of `window` samples (shorter at
/// the start of the series).
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (i, v) in series.iter().enumerate() {
        acc += v;
        if i >= w {
            acc -= series[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// First episode at which the `window`-smoothed reward comes within
/// `fraction` of the asymptote (mean of the last `window` rewards) and stays
/// there.
pub fn episodes_to_asymptote(series: &[f64], window: usize, fraction: f64) -> Option<usize> {
    if series.len() < window || window == 0 {
        return None;
    }
    let asymptote = series[series.len() - window..].iter().sum::<f64>() / window as f64;
    let tol = fraction * asymptote.abs();
    let smooth = moving_average(series, window);
    let last_bad = smooth.iter().rposition(|s| (s - asymptote).abs() > tol);
    match last_bad {
        None => Some(0),
        Some(i) if i + 1 < smooth.len() => Some(i + 1),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_converges_at_window() {
        assert_eq!(detect_convergence(&[1.0; 200], 50, 1e-9), Some(50));
    }

    #[test]
    fn improving_series_never_converges() {
        let s: Vec<f64> = (0..300).map(|i| i as f64).collect();
        assert_eq!(detect_convergence(&s, 50, 1.0), None);
    }

    #[test]
    fn short_series() {
        assert_eq!(detect_convergence(&[0.0; 99], 50, 1.0), None);
    }

    #[test]
    fn moving_average_warm_start() {
        assert_eq!(moving_average(&[2.0, 4.0, 6.0, 8.0], 2), vec![2.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn asymptote_reached_after_transient() {
        let s: Vec<f64> = (0..200).map(|i| if i < 50 { -1.0 } else { -0.1 }).collect();
        let k = episodes_to_asymptote(&s, 10, 0.1).unwrap();
        assert!((50..=60).contains(&k), "{k}");
    }
}
