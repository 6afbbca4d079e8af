//! Condition-level worker pool with a single ordered writer.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use anyhow::{bail, Context as _, Result};
use robust_ope::{load_classification_csv, ClassificationData};

use crate::config::ExperimentConfig;
use crate::pipeline::run_repetition;
use crate::plan::{plan, PlannedCondition};
use crate::results::{condition_rows, write_rows, ResultRow};

pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub results_path: PathBuf,
    pub conditions: usize,
    /// Already present in the results file from an earlier run.
    pub resumed: usize,
    pub completed: usize,
    /// `(condition id, error)` for conditions with no successful repetition.
    pub failed: Vec<(String, String)>,
    pub skipped_reps: usize,
}

struct Outcome {
    index: usize,
    rows: std::result::Result<Vec<ResultRow>, String>,
    skipped_reps: usize,
}

fn run_condition(pc: &PlannedCondition, data: &ClassificationData<f64>, cfg: &ExperimentConfig) -> Outcome {
    let mut reps = Vec::with_capacity(pc.condition.repetitions);
    let mut last_err = None;
    for rep in 0..pc.condition.repetitions {
        match run_repetition(&pc.condition, data, rep, &pc.estimators, &cfg.training, &cfg.scenario) {
            Ok(r) => reps.push(r),
            Err(e) => {
                log::warn!("{} rep {rep} skipped: {e}", pc.id);
                last_err = Some(e.to_string());
            }
        }
    }
    let skipped = pc.condition.repetitions - reps.len();
    let rows = if reps.is_empty() {
        Err(last_err.unwrap_or_else(|| "no repetitions".into()))
    } else {
        Ok(condition_rows(pc, &reps))
    };
    Outcome {
        index: 0,
        rows,
        skipped_reps: skipped,
    }
}

/// Rows of fully written conditions from an earlier, possibly interrupted,
/// run. A trailing line without a newline is treated as torn and dropped.
fn completed_rows(path: &Path, planned: &[PlannedCondition]) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let body = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(body.as_bytes()).deserialize::<ResultRow>() {
        match rec {
            Ok(r) => rows.push(r),
            Err(_) => break,
        }
    }
    let expected: BTreeMap<&str, &PlannedCondition> = planned.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut by_id: BTreeMap<String, Vec<ResultRow>> = BTreeMap::new();
    for r in rows {
        by_id.entry(r.condition_id.clone()).or_default().push(r);
    }
    let mut kept = Vec::new();
    for pc in planned {
        if let Some(rs) = by_id.remove(&pc.id) {
            let names: Vec<String> = pc.estimators.iter().map(|n| n.to_string()).collect();
            let got: Vec<&str> = rs.iter().map(|r| r.estimator.as_str()).collect();
            let same_condition = rs.iter().all(|r| {
                r.dataset == pc.condition.dataset
                    && r.logging_policy == pc.condition.logging.to_string()
                    && r.target_policy == pc.condition.target.to_string()
                    && r.shift == pc.condition.shift.to_string()
                    && r.knowledge_flags == pc.condition.knowledge.to_string()
            });
            if same_condition && got == names.iter().map(String::as_str).collect::<Vec<_>>() {
                kept.extend(rs);
            }
        }
    }
    if let Some(id) = by_id.keys().find(|id| !expected.contains_key(id.as_str())) {
        bail!("{} holds condition {id}, which the config does not define", path.display());
    }
    Ok(kept)
}

fn load_datasets(cfg: &ExperimentConfig) -> Result<Vec<Arc<ClassificationData<f64>>>> {
    cfg.datasets
        .iter()
        .map(|d| {
            load_classification_csv(&d.path, &d.label_column)
                .map(Arc::new)
                .with_context(|| format!("loading dataset `{}`", d.name))
        })
        .collect()
}

/// Runs every planned condition not already in `results.csv`, appending
/// each condition's rows in plan order as soon as it and all earlier ones
/// are done. Output is independent of the worker count.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<RunSummary> {
    cfg.validate()?;
    let planned = plan(cfg);
    let datasets = load_datasets(cfg)?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let path = cfg.output_dir.join(RESULTS_FILE);

    let kept = if path.exists() { completed_rows(&path, &planned)? } else { Vec::new() };
    let done: HashSet<String> = kept.iter().map(|r| r.condition_id.clone()).collect();
    write_rows(File::create(&path)?, &kept, true)?;
    let mut file = OpenOptions::new().append(true).open(&path)?;

    let todo: Vec<&PlannedCondition> = planned.iter().filter(|p| !done.contains(&p.id)).collect();
    let mut summary = RunSummary {
        results_path: path.clone(),
        conditions: planned.len(),
        resumed: done.len(),
        ..Default::default()
    };
    log::info!("{} conditions, {} already done, {} workers", planned.len(), done.len(), workers);

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Outcome>();
    std::thread::scope(|s| -> Result<()> {
        for _ in 0..workers.max(1).min(todo.len().max(1)) {
            let tx = tx.clone();
            let (next, todo, datasets) = (&next, &todo, &datasets);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(pc) = todo.get(i) else { break };
                let mut out = run_condition(pc, &datasets[pc.dataset], cfg);
                out.index = i;
                if tx.send(out).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        for out in rx {
            pending.insert(out.index, out);
            while let Some(out) = pending.remove(&cursor) {
                let pc = todo[cursor];
                summary.skipped_reps += out.skipped_reps;
                match out.rows {
                    Ok(rows) => {
                        write_rows(&mut file, &rows, false)?;
                        summary.completed += 1;
                        log::info!("{} done ({}/{})", pc.id, cursor + 1, todo.len());
                    }
                    Err(e) => {
                        log::error!("{} failed: {e}", pc.id);
                        summary.failed.push((pc.id.clone(), e));
                    }
                }
                cursor += 1;
            }
        }
        Ok(())
    })?;
    Ok(summary)
}
