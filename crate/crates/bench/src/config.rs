//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use robust_ope::logistic::classifier_config;
use robust_ope::scenarios::ScenarioOptions;
use robust_ope::{EstimatorName, FeatureMode, GridSearch, Knowledge, PolicySpec, ShiftSpec, TrainConfig};
use serde::{Deserialize, Serialize};

/// Overrides `workers` from the config file.
pub const WORKERS_ENV: &str = "ROBUST_OPE_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Relative paths resolve against the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Estimators to evaluate; by default every estimator applicable to the
    /// condition (covariate-shift ones only when a shift is configured).
    #[serde(default)]
    pub estimators: Option<Vec<EstimatorName>>,
    pub datasets: Vec<DatasetSpec>,
    #[serde(rename = "grid")]
    pub grids: Vec<GridSpec>,
    #[serde(default)]
    pub training: TrainingSpec,
    #[serde(default)]
    pub scenario: ScenarioOptions,
}

fn default_repetitions() -> usize {
    30
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    pub label_column: String,
}

/// A cross product of policies, shifts and knowledge flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Restricts the grid to these dataset names; all datasets by default.
    #[serde(default)]
    pub datasets: Option<Vec<String>>,
    pub logging: Vec<PolicySpec>,
    pub target: Vec<PolicySpec>,
    #[serde(default = "default_shifts")]
    pub shift: Vec<ShiftSpec>,
    #[serde(default = "default_knowledge")]
    pub knowledge: Vec<Knowledge>,
}

fn default_shifts() -> Vec<ShiftSpec> {
    vec![ShiftSpec::None]
}

fn default_knowledge() -> Vec<Knowledge> {
    vec![Knowledge {
        propensity_known: true,
        context_ratio_known: true,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub feature_mode: FeatureMode,
    pub epochs: usize,
    pub lr_decay: bool,
    pub l2_reg: f64,
    pub batch_sizes: Vec<usize>,
    pub validation_fraction: f64,
    pub robust_learning_rates: Vec<f64>,
    /// The least-squares baseline needs larger steps than the robust model
    /// to converge within the same epoch budget.
    pub least_squares_learning_rates: Vec<f64>,
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub classifier_learning_rate: f64,
    pub classifier_batch_size: usize,
    pub classifier_epochs: usize,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        let grid = GridSearch::default();
        let base = TrainConfig::default();
        let clf = classifier_config(0);
        Self {
            feature_mode: FeatureMode::Concat,
            epochs: base.epochs,
            lr_decay: base.lr_decay,
            l2_reg: base.l2_reg,
            batch_sizes: grid.batch_sizes,
            validation_fraction: grid.validation_fraction,
            robust_learning_rates: grid.learning_rates,
            least_squares_learning_rates: vec![0.01, 0.005],
            mu0: 0.6,
            sigma0_sq: 1.0,
            classifier_learning_rate: clf.learning_rate,
            classifier_batch_size: clf.batch_size,
            classifier_epochs: clf.epochs,
        }
    }
}

impl TrainingSpec {
    pub fn base_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.robust_learning_rates.first().copied().unwrap_or(0.001),
            batch_size: self.batch_sizes.first().copied().unwrap_or(8),
            epochs: self.epochs,
            lr_decay: self.lr_decay,
            l2_reg: self.l2_reg,
            seed,
        }
    }

    pub fn robust_grid(&self) -> GridSearch {
        GridSearch {
            learning_rates: self.robust_learning_rates.clone(),
            batch_sizes: self.batch_sizes.clone(),
            validation_fraction: self.validation_fraction,
        }
    }

    pub fn least_squares_grid(&self) -> GridSearch {
        GridSearch {
            learning_rates: self.least_squares_learning_rates.clone(),
            ..self.robust_grid()
        }
    }

    pub fn classifier_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.classifier_learning_rate,
            batch_size: self.classifier_batch_size,
            epochs: self.classifier_epochs,
            ..classifier_config(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty()
            || self.robust_learning_rates.is_empty()
            || self.least_squares_learning_rates.is_empty()
        {
            bail!("training grids must be nonempty");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            bail!("validation_fraction must lie in [0, 1)");
        }
        self.base_config(0).validate()?;
        self.classifier_config(0).validate()?;
        robust_ope::BaseDistribution::new(self.mu0, self.sigma0_sq)?;
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for d in &mut cfg.datasets {
            if d.path.is_relative() {
                d.path = dir.join(&d.path);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = dir.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        if self.datasets.is_empty() {
            bail!("no datasets configured");
        }
        if self.grids.is_empty() {
            bail!("no condition grid configured");
        }
        for (i, g) in self.grids.iter().enumerate() {
            if g.logging.is_empty() || g.target.is_empty() || g.shift.is_empty() || g.knowledge.is_empty() {
                bail!("grid {i} has an empty axis");
            }
            for spec in g.logging.iter().chain(&g.target) {
                spec.validate()?;
            }
            for s in &g.shift {
                s.validate()?;
            }
            for name in g.datasets.iter().flatten() {
                if !self.datasets.iter().any(|d| &d.name == name) {
                    bail!("grid {i} names unknown dataset `{name}`");
                }
            }
        }
        if let Some(est) = &self.estimators {
            if est.is_empty() {
                bail!("estimator list is empty");
            }
        }
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        self.training.validate()
    }

    /// Worker count: the environment override, then the config, then the
    /// available parallelism.
    pub fn worker_count(&self) -> Result<usize> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                let n: usize = v
                    .trim()
                    .parse()
                    .with_context(|| format!("{WORKERS_ENV}={v} is not a worker count"))?;
                if n == 0 {
                    bail!("{WORKERS_ENV} must be at least 1");
                }
                Ok(n)
            }
            Err(_) => Ok(self.workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            })),
        }
    }
}
