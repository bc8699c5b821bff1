use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rmse::{MetricWeights, TrajectoryErrors};
use crate::error::{Error, Result};

/// One cell group of the per-task table: mean errors of a policy on a shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub shape: String,
    pub policy: String,
    pub episodes: usize,
    pub pos_virtual: f64,
    pub ori_virtual: f64,
    pub pos_real: f64,
    pub ori_real: f64,
    pub combined: f64,
}

/// Per-task table: shapes × policies × {position, orientation} × {virtual, real}.
pub fn task_table(results: &BTreeMap<(String, String), Vec<TrajectoryErrors>>, w: &MetricWeights) -> Vec<TaskRow> {
    results
        .iter()
        .filter(|(_, eps)| !eps.is_empty())
        .map(|((shape, policy), eps)| {
            let n = eps.len() as f64;
            let avg = |f: &dyn Fn(&TrajectoryErrors) -> f64| eps.iter().map(f).sum::<f64>() / n;
            TaskRow {
                shape: shape.clone(),
                policy: policy.clone(),
                episodes: eps.len(),
                pos_virtual: avg(&|e| e.pos_v),
                ori_virtual: avg(&|e| e.ori_v),
                pos_real: avg(&|e| e.pos_r),
                ori_real: avg(&|e| e.ori_r),
                combined: avg(&|e| e.combined(w)),
            }
        })
        .collect()
}

/// One column of the delay-sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    pub delay_mean_ms: f64,
    pub delay_std_ms: f64,
    pub average_rmse: f64,
    pub convergence_episode: Option<usize>,
    pub visual_e2e_ms: f64,
    pub control_e2e_ms: f64,
    /// Expected transport delay plus fixed processing on each loop.
    pub visual_budget_ms: f64,
    pub control_budget_ms: f64,
}

/// A table plus the provenance every report carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub config_hash: String,
    pub code_version: String,
    pub rows: Vec<T>,
}

impl<T: Serialize> Report<T> {
    pub fn new(config_hash: impl Into<String>, rows: Vec<T>) -> Self {
        Self {
            config_hash: config_hash.into(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            rows,
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// CSV of the rows, preceded by `# config_hash=…` and `# code_version=…`
    /// comment lines.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Io(e.into()))?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let mut out = format!("# config_hash={}\n# code_version={}\n", self.config_hash, self.code_version).into_bytes();
        out.extend(body);
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_by_four_grid() {
        let mut m = BTreeMap::new();
        for s in ["circle", "square", "pentagram", "triangle"] {
            for p in ["agent", "wp", "od", "rs"] {
                m.insert((s.to_string(), p.to_string()), vec![TrajectoryErrors::default(); 2]);
            }
        }
        let rows = task_table(&m, &MetricWeights::default());
        assert_eq!(rows.len(), 16);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        Report::new("abc", rows).write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=abc\n"));
        assert_eq!(text.lines().count(), 2 + 1 + 16);
    }
}
