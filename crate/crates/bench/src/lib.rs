//! Benchmark orchestration: condition grids, repetitions, MSE tables,
//! relative-MSE CDFs and family win counts.

pub mod analysis;
pub mod config;
pub mod pipeline;
pub mod plan;
pub mod results;
pub mod runner;

pub use analysis::{family_report, pairwise_win_fraction, relative_cdf, CdfPoint, FamilyReport};
pub use config::{ExperimentConfig, WORKERS_ENV};
pub use plan::{plan, PlannedCondition};
pub use results::{read_results, ResultRow};
pub use runner::{run, RunSummary, RESULTS_FILE};
