use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rmse::{MetricWeights, TrajectoryErrors};
use crate::error::{Error, Result};

/// Minimum episodes per policy for a comparison.
pub const MIN_EPISODES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub policy: String,
    pub episodes: usize,
    pub e_v_mean: f64,
    pub e_v_std: f64,
    pub e_r_mean: f64,
    pub e_r_std: f64,
    pub combined_mean: f64,
    pub combined_std: f64,
    /// `(this − reference) / reference × 100` against the reference policy.
    pub delta_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    /// Sorted by ascending combined error.
    pub ranking: Vec<PolicyStats>,
}

impl Comparison {
    pub fn get(&self, policy: &str) -> Option<&PolicyStats> {
        self.ranking.iter().find(|s| s.policy == policy)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Ranks policies by mean combined weighted RMSE and expresses every policy
/// relative to `reference` as `(policy − reference) / reference × 100`.
pub fn compare_policies(
    results: &BTreeMap<String, Vec<TrajectoryErrors>>,
    reference: &str,
    w: &MetricWeights,
) -> Result<Comparison> {
    for (name, eps) in results {
        if eps.len() < MIN_EPISODES {
            return Err(Error::config(format!(
                "policy `{name}` has {} episodes, comparison needs {MIN_EPISODES}",
                eps.len()
            )));
        }
    }
    let ref_errs = results
        .get(reference)
        .ok_or_else(|| Error::config(format!("reference policy `{reference}` missing")))?;
    let ref_combined = mean_std(&ref_errs.iter().map(|e| e.combined(w)).collect::<Vec<_>>()).0;

    let mut ranking: Vec<PolicyStats> = results
        .iter()
        .map(|(name, eps)| {
            let ev: Vec<f64> = eps.iter().map(|e| e.e_v(w)).collect();
            let er: Vec<f64> = eps.iter().map(|e| e.e_r(w)).collect();
            let c: Vec<f64> = eps.iter().map(|e| e.combined(w)).collect();
            let (e_v_mean, e_v_std) = mean_std(&ev);
            let (e_r_mean, e_r_std) = mean_std(&er);
            let (combined_mean, combined_std) = mean_std(&c);
            PolicyStats {
                policy: name.clone(),
                episodes: eps.len(),
                e_v_mean,
                e_v_std,
                e_r_mean,
                e_r_std,
                combined_mean,
                combined_std,
                delta_pct: percent_delta(combined_mean, ref_combined),
            }
        })
        .collect();
    ranking.sort_by(|a, b| a.combined_mean.total_cmp(&b.combined_mean).then(a.policy.cmp(&b.policy)));
    Ok(Comparison {
        reference: reference.to_string(),
        ranking,
    })
}

/// `(baseline − ours) / ours × 100`; zero when both are zero.
pub fn percent_delta(baseline: f64, ours: f64) -> f64 {
    if baseline == ours {
        0.0
    } else {
        (baseline - ours) / ours * 100.0
    }
}
