//! Expands the config grids into an ordered list of conditions.

use robust_ope::{Condition, EstimatorName};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedCondition {
    /// `c0000`, `c0001`, ... in enumeration order.
    pub id: String,
    /// Index into `ExperimentConfig::datasets`.
    pub dataset: usize,
    pub condition: Condition,
    pub estimators: Vec<EstimatorName>,
}

/// Grids in file order; within a grid, datasets x logging x target x shift x
/// knowledge with the last axis varying fastest. Every condition uses the
/// master seed, so conditions differing only in knowledge flags see
/// identical data.
pub fn plan(cfg: &ExperimentConfig) -> Vec<PlannedCondition> {
    let mut out = Vec::new();
    for grid in &cfg.grids {
        for (di, ds) in cfg.datasets.iter().enumerate() {
            if let Some(only) = &grid.datasets {
                if !only.contains(&ds.name) {
                    continue;
                }
            }
            for logging in &grid.logging {
                for target in &grid.target {
                    for shift in &grid.shift {
                        for knowledge in &grid.knowledge {
                            let estimators = match &cfg.estimators {
                                Some(list) => list.clone(),
                                None => EstimatorName::ALL
                                    .into_iter()
                                    .filter(|n| !shift.is_none() || !n.needs_gcs())
                                    .collect(),
                            };
                            out.push(PlannedCondition {
                                id: format!("c{:04}", out.len()),
                                dataset: di,
                                condition: Condition {
                                    dataset: ds.name.clone(),
                                    logging: logging.clone(),
                                    target: target.clone(),
                                    shift: *shift,
                                    knowledge: *knowledge,
                                    repetitions: cfg.repetitions,
                                    seed: cfg.master_seed,
                                },
                                estimators,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}
