//! Per-condition aggregation and the results table.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{Context as _, Result};
use robust_ope::EstimatorName;
use serde::{Deserialize, Serialize};

use crate::pipeline::Repetition;
use crate::plan::PlannedCondition;

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub condition_id: String,
    pub dataset: String,
    pub logging_policy: String,
    pub target_policy: String,
    pub shift: String,
    pub knowledge_flags: String,
    pub estimator: String,
    pub mse: f64,
    pub bias: f64,
    pub mean_estimate: f64,
    pub reps: usize,
}

/// MSE, bias and mean estimate of one estimator over repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub mse: f64,
    pub bias: f64,
    pub mean_estimate: f64,
    pub reps: usize,
}

/// Summarizes `(estimate, true value)` pairs.
pub fn summarize(pairs: &[(f64, f64)]) -> Option<ErrorSummary> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let (mut se, mut e, mut est) = (0.0, 0.0, 0.0);
    for &(v_hat, v) in pairs {
        let d = v_hat - v;
        se += d * d;
        e += d;
        est += v_hat;
    }
    Some(ErrorSummary {
        mse: se / n,
        bias: e / n,
        mean_estimate: est / n,
        reps: pairs.len(),
    })
}

/// Rows for one condition, in the condition's estimator order.
pub fn condition_rows(pc: &PlannedCondition, reps: &[Repetition]) -> Vec<ResultRow> {
    let mut pairs: BTreeMap<EstimatorName, Vec<(f64, f64)>> = BTreeMap::new();
    for r in reps {
        for (&name, &v) in &r.estimates {
            pairs.entry(name).or_default().push((v, r.true_value));
        }
    }
    let c = &pc.condition;
    pc.estimators
        .iter()
        .filter_map(|name| {
            let s = summarize(pairs.get(name)?)?;
            Some(ResultRow {
                condition_id: pc.id.clone(),
                dataset: c.dataset.clone(),
                logging_policy: c.logging.to_string(),
                target_policy: c.target.to_string(),
                shift: c.shift.to_string(),
                knowledge_flags: c.knowledge.to_string(),
                estimator: name.to_string(),
                mse: s.mse,
                bias: s.bias,
                mean_estimate: s.mean_estimate,
                reps: s.reps,
            })
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("reading {}", path.display())))
        .collect()
}

pub const COLUMNS: [&str; 11] = [
    "condition_id",
    "dataset",
    "logging_policy",
    "target_policy",
    "shift",
    "knowledge_flags",
    "estimator",
    "mse",
    "bias",
    "mean_estimate",
    "reps",
];

/// Writes rows, preceded by the header when `header` is set, and flushes.
pub fn write_rows<W: Write>(w: W, rows: &[ResultRow], header: bool) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    if header {
        wr.write_record(COLUMNS)?;
    }
    for row in rows {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}
