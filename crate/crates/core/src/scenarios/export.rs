use std::fs;
use std::path::Path;

use serde_json::json;

use super::generate::{Condition, GeneratedScenario};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `logging.csv` (training logging data with the true ratio per
/// sample), `target_contexts.csv` and `meta.json` into `dir`.
pub fn export_scenario<T: Scalar>(
    scn: &GeneratedScenario<T>,
    cond: &Condition,
    rep: usize,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let d = scn.contexts.ncols();
    let xcols: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();

    let path = dir.join("logging.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header = xcols.clone();
    header.extend(["a", "r", "true_w"].map(String::from));
    w.write_record(&header).map_err(csv_err(&path))?;
    for s in scn.train_logging.samples() {
        let mut rec: Vec<String> = s.context.iter().map(|v| v.to_string()).collect();
        rec.push(s.action.to_string());
        rec.push(s.reward.to_string());
        rec.push(scn.true_ratio(s.context_id, s.action)?.to_string());
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("target_contexts.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(&xcols).map_err(csv_err(&path))?;
    for ctx in scn.target_contexts() {
        w.write_record(ctx.x.iter().map(|v| v.to_string()))
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let meta = json!({
        "true_value": scn.true_value.as_f64(),
        "dataset": cond.dataset,
        "logging_policy": cond.logging,
        "target_policy": cond.target,
        "logging_descriptor": scn.logging.descriptor().to_string(),
        "target_descriptor": scn.target.descriptor().to_string(),
        "shift": cond.shift,
        "seed": cond.seed,
        "repetition": rep,
        "repetition_seed": cond.rep_seed(rep),
        "k": scn.k,
        "d": d,
        "train_size": scn.train_idx.len(),
        "test_size": scn.test_idx.len(),
    });
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(io_err(&path))?;
    Ok(())
}
