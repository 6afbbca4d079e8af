//! Mini-batch SGD shared by the robust reward model, the least-squares
//! baseline and the logistic classifiers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiply the rate by `10 / (10 + sqrt(i - 1))` at (1-based) epoch `i`.
    pub lr_decay: bool,
    pub l2_reg: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 8,
            epochs: 50,
            lr_decay: true,
            l2_reg: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "l2_reg must be nonnegative, got {}",
                self.l2_reg
            )));
        }
        Ok(())
    }

    /// Learning rate used during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.lr_decay {
            let i = epoch.max(1) as f64;
            self.learning_rate * 10.0 / (10.0 + (i - 1.0).sqrt())
        } else {
            self.learning_rate
        }
    }
}

/// Hyperparameter grid searched by validation loss on a held-out slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearch {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    /// Fraction of the training data held out for selection.
    pub validation_fraction: f64,
}

impl Default for GridSearch {
    fn default() -> Self {
        Self {
            learning_rates: vec![0.001, 0.0005],
            batch_sizes: vec![8, 32, 64, 256],
            validation_fraction: 0.1,
        }
    }
}

impl GridSearch {
    /// A grid with a single point: no selection happens.
    pub fn single(cfg: &TrainConfig) -> Self {
        Self {
            learning_rates: vec![cfg.learning_rate],
            batch_sizes: vec![cfg.batch_size],
            validation_fraction: 0.0,
        }
    }

    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &bs in &self.batch_sizes {
                out.push(TrainConfig {
                    learning_rate: lr,
                    batch_size: bs,
                    ..base.clone()
                });
            }
        }
        out
    }

    /// Seeded split of `0..n` into (train, validation) index sets. The
    /// validation set is empty when the grid has one point or `n` is tiny.
    pub fn split(&self, n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        let n_val = (self.validation_fraction * n as f64).round() as usize;
        if self.configs(&TrainConfig::default()).len() <= 1 || n_val == 0 || n_val >= n {
            return (idx, Vec::new());
        }
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5911_7000));
        let mut val = idx.split_off(n - n_val);
        idx.sort_unstable();
        val.sort_unstable();
        (idx, val)
    }
}

/// Trains one model per grid point on the training slice, scores each on
/// the validation slice (lower is better), retrains the winner on all data.
/// Grid points whose training fails are skipped.
pub fn select_and_fit<M, Fit, Score>(
    n: usize,
    base: &TrainConfig,
    grid: &GridSearch,
    mut fit: Fit,
    score: Score,
) -> Result<(M, TrainConfig)>
where
    Fit: FnMut(&[usize], &TrainConfig) -> Result<M>,
    Score: Fn(&M, &[usize]) -> f64,
{
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let (train, val) = grid.split(n, base.seed);
    if val.is_empty() {
        let cfg = configs[0].clone();
        return fit(&all, &cfg).map(|m| (m, cfg));
    }
    let mut best: Option<(f64, TrainConfig)> = None;
    let mut last_err = None;
    for cfg in configs {
        match fit(&train, &cfg) {
            Ok(model) => {
                let s = score(&model, &val);
                let better = match &best {
                    None => s.is_finite(),
                    Some((b, _)) => s < *b,
                };
                if better {
                    best = Some((s, cfg));
                }
            }
            Err(e) => {
                log::debug!("grid point lr={} bs={} failed: {e}", cfg.learning_rate, cfg.batch_size);
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((_, cfg)) => fit(&all, &cfg).map(|m| (m, cfg)),
        None => Err(last_err.unwrap_or_else(|| {
            Error::InvalidConfig("no grid point produced a finite validation loss".into())
        })),
    }
}

/// Runs `cfg.epochs` passes of shuffled mini-batch descent over `n` samples.
///
/// `grad(batch, params, out)` must overwrite `out` with the gradient of the
/// loss being minimized on the given sample indices; the step is
/// `params -= lr * out`. Shuffling is driven by `cfg.seed`.
pub fn minimize<T, F>(n: usize, params: &mut [T], cfg: &TrainConfig, mut grad: F) -> Result<()>
where
    T: Scalar,
    F: FnMut(&[usize], &[T], &mut [T]),
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut g = vec![T::zero(); params.len()];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let lr = T::lit(cfg.lr_at(epoch));
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad(batch, params, &mut g);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    epoch,
                    batch: batch_idx,
                });
            }
            for (p, &d) in params.iter_mut().zip(&g) {
                *p -= lr * d;
            }
        }
    }
    Ok(())
}
