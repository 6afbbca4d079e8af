//! Distributionally robust reward regression.
//!
//! The predictor is a Gaussian whose reliance on the logged data is
//! modulated by the density ratio `W(x, a) = P_s(x, a) / P_t(x, a)`:
//!
//! ```text
//! sigma^2(x, a) = 1 / (2 W theta_r + 1 / sigma0^2)
//! mu(x, a)      = sigma^2 (-2 W theta_x . phi(x, a) + mu0 / sigma0^2)
//! ```
//!
//! With `W = 0` the prediction is exactly the base distribution
//! `N(mu0, sigma0^2)`; with large `W` it is driven by the learned parameters.
//!
//! Parameters are fitted by maximizing the target-distribution
//! log-likelihood. Rewritten over logged samples, the per-sample objective is
//! the relative log-likelihood `(log f(r) - log f0(r)) / W`, whose gradient
//! is `(mu^2 + sigma^2 - r^2, 2 (mu - r) phi)`. [`batch_gradient`] returns the
//! update direction `(mu^2 + sigma^2 - r^2, (mu - r) phi)` used by the
//! training loop: the same ascent direction with the `theta_x` half scaled by
//! one half. [`RobustGradient::nll_gradient`] converts it to the exact
//! gradient of [`relative_nll`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{BanditDataset, Context};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureMode};
use crate::optim::{self, GridSearch, TrainConfig};
use crate::scalar::Scalar;

/// Lower bound on the precision `2 W theta_r + 1 / sigma0^2`.
pub const EPS_VAR: f64 = 1e-6;

/// Standard deviation of the random parameter initialization.
pub const INIT_STD: f64 = 0.01;

/// The Gaussian base distribution `f0 = N(mu0, sigma0^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseDistribution<T> {
    pub mu0: T,
    pub sigma0_sq: T,
}

impl<T: Scalar> BaseDistribution<T> {
    pub fn new(mu0: T, sigma0_sq: T) -> Result<Self> {
        if !(sigma0_sq > T::zero()) || !sigma0_sq.is_finite() || !mu0.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "base distribution needs finite mu0 and sigma0_sq > 0, got ({mu0}, {sigma0_sq})"
            )));
        }
        Ok(Self { mu0, sigma0_sq })
    }
}

impl<T: Scalar> Default for BaseDistribution<T> {
    fn default() -> Self {
        Self {
            mu0: T::lit(0.6),
            sigma0_sq: T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustParams<T> {
    pub theta_r: T,
    pub theta_x: Vec<T>,
}

impl<T: Scalar> RobustParams<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            theta_r: T::zero(),
            theta_x: vec![T::zero(); dim],
        }
    }

    /// `theta ~ N(0, INIT_STD^2)` i.i.d.
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let theta_r = T::lit(normal.sample(&mut rng));
        let theta_x = (0..dim).map(|_| T::lit(normal.sample(&mut rng))).collect();
        Self { theta_r, theta_x }
    }

    pub fn is_finite(&self) -> bool {
        self.theta_r.is_finite() && self.theta_x.iter().all(|v| v.is_finite())
    }

    fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.theta_x.len() + 1);
        v.push(self.theta_r);
        v.extend_from_slice(&self.theta_x);
        v
    }

    fn from_flat(v: &[T]) -> Self {
        Self {
            theta_r: v[0],
            theta_x: v[1..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrediction<T> {
    pub mu: T,
    pub sigma_sq: T,
}

/// Gaussian predictive distribution at `(x, a)` given ratio `w >= 0`.
pub fn predict<T: Scalar>(
    params: &RobustParams<T>,
    base: &BaseDistribution<T>,
    fm: &FeatureMap,
    x: &[T],
    a: usize,
    w: T,
) -> GaussianPrediction<T> {
    predict_with_dot(params, base, w, fm.dot(&params.theta_x, x, a))
}

fn predict_with_dot<T: Scalar>(
    params: &RobustParams<T>,
    base: &BaseDistribution<T>,
    w: T,
    theta_phi: T,
) -> GaussianPrediction<T> {
    if w == T::zero() {
        return GaussianPrediction {
            mu: base.mu0,
            sigma_sq: base.sigma0_sq,
        };
    }
    let two = T::lit(2.0);
    let precision = (two * w * params.theta_r + base.sigma0_sq.recip()).max(T::lit(EPS_VAR));
    let sigma_sq = precision.recip();
    let mu = sigma_sq * (-two * w * theta_phi + base.mu0 / base.sigma0_sq);
    GaussianPrediction { mu, sigma_sq }
}

/// One training example for the robust model.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSample<'a, T> {
    pub x: &'a [T],
    pub action: usize,
    pub reward: T,
    pub w: T,
}

/// Update direction from the mini-batch formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustGradient<T> {
    pub theta_r: T,
    pub theta_x: Vec<T>,
}

impl<T: Scalar> RobustGradient<T> {
    /// Exact gradient of [`relative_nll`] (without the L2 term).
    pub fn nll_gradient(&self) -> (T, Vec<T>) {
        let two = T::lit(2.0);
        (
            -self.theta_r,
            self.theta_x.iter().map(|&g| -two * g).collect(),
        )
    }
}

/// `g_r = mean(mu^2 + sigma^2 - r^2)`, `g_x = mean((mu - r) phi)`, minus
/// `2 l2_reg theta` when regularized. Training steps `theta += lr * g`.
pub fn batch_gradient<'a, T, I>(
    params: &RobustParams<T>,
    base: &BaseDistribution<T>,
    fm: &FeatureMap,
    batch: I,
    l2_reg: T,
) -> RobustGradient<T>
where
    T: Scalar,
    I: IntoIterator<Item = WeightedSample<'a, T>>,
{
    let mut g_r = T::zero();
    let mut g_x = vec![T::zero(); params.theta_x.len()];
    let mut n = 0usize;
    for s in batch {
        let p = predict(params, base, fm, s.x, s.action, s.w);
        g_r += p.mu * p.mu + p.sigma_sq - s.reward * s.reward;
        fm.axpy(p.mu - s.reward, s.x, s.action, &mut g_x);
        n += 1;
    }
    let inv = if n > 0 { T::count(n).recip() } else { T::zero() };
    g_r *= inv;
    g_x.iter_mut().for_each(|g| *g *= inv);
    if l2_reg > T::zero() {
        let two = T::lit(2.0);
        g_r -= two * l2_reg * params.theta_r;
        for (g, &t) in g_x.iter_mut().zip(&params.theta_x) {
            *g -= two * l2_reg * t;
        }
    }
    RobustGradient {
        theta_r: g_r,
        theta_x: g_x,
    }
}

fn gaussian_log_density<T: Scalar>(r: T, mu: T, sigma_sq: T) -> T {
    let half = T::lit(0.5);
    let d = r - mu;
    -half * (T::lit(2.0) * T::PI() * sigma_sq).ln() - half * d * d / sigma_sq
}

/// Importance-weighted relative negative log-likelihood
/// `-mean((log f_theta(r) - log f0(r)) / W)` over the batch.
///
/// Samples with `W = 0` contribute their `W -> 0` limit, which is linear in
/// theta.
pub fn relative_nll<'a, T, I>(
    params: &RobustParams<T>,
    base: &BaseDistribution<T>,
    fm: &FeatureMap,
    batch: I,
) -> T
where
    T: Scalar,
    I: IntoIterator<Item = WeightedSample<'a, T>>,
{
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut n = 0usize;
    for s in batch {
        let theta_phi = fm.dot(&params.theta_x, s.x, s.action);
        let ll = if s.w == T::zero() {
            params.theta_r * (base.mu0 * base.mu0 + base.sigma0_sq - s.reward * s.reward)
                + two * theta_phi * (base.mu0 - s.reward)
        } else {
            let p = predict_with_dot(params, base, s.w, theta_phi);
            (gaussian_log_density(s.reward, p.mu, p.sigma_sq)
                - gaussian_log_density(s.reward, base.mu0, base.sigma0_sq))
                / s.w
        };
        total += ll;
        n += 1;
    }
    if n == 0 {
        T::zero()
    } else {
        -total / T::count(n)
    }
}

fn check_ratios<T: Scalar>(dataset: &BanditDataset<T>, ws: &[T]) -> Result<()> {
    if ws.len() != dataset.len() {
        return Err(Error::InvalidConfig(format!(
            "{} ratio values for {} samples",
            ws.len(),
            dataset.len()
        )));
    }
    if let Some(i) = ws.iter().position(|w| !(w.is_finite() && *w >= T::zero())) {
        return Err(Error::InvalidSample {
            index: i,
            reason: format!("density ratio {} is not a finite nonnegative value", ws[i]),
        });
    }
    Ok(())
}

fn samples_at<'a, T: Scalar>(
    dataset: &'a BanditDataset<T>,
    ws: &'a [T],
    idx: &'a [usize],
) -> impl Iterator<Item = WeightedSample<'a, T>> + 'a {
    idx.iter().map(move |&i| {
        let s = &dataset.samples()[i];
        WeightedSample {
            x: &s.context,
            action: s.action,
            reward: s.reward,
            w: ws[i],
        }
    })
}

/// Mini-batch SGD from a seeded random initialization.
pub fn train<T: Scalar>(
    dataset: &BanditDataset<T>,
    ws: &[T],
    base: &BaseDistribution<T>,
    fm: &FeatureMap,
    cfg: &TrainConfig,
) -> Result<RobustParams<T>> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    train_on(dataset, ws, &all, base, fm, cfg)
}

fn train_on<T: Scalar>(
    dataset: &BanditDataset<T>,
    ws: &[T],
    idx: &[usize],
    base: &BaseDistribution<T>,
    fm: &FeatureMap,
    cfg: &TrainConfig,
) -> Result<RobustParams<T>> {
    cfg.validate()?;
    check_ratios(dataset, ws)?;
    let init = RobustParams::random(fm.output_dim(), cfg.seed);
    let mut flat = init.to_flat();
    let l2 = T::lit(cfg.l2_reg);
    optim::minimize(idx.len(), &mut flat, cfg, |batch, theta, out| {
        let params = RobustParams::from_flat(theta);
        let batch_idx: Vec<usize> = batch.iter().map(|&b| idx[b]).collect();
        let g = batch_gradient(&params, base, fm, samples_at(dataset, ws, &batch_idx), l2);
        // minimize() descends; the robust update ascends along g.
        out[0] = -g.theta_r;
        for (o, v) in out[1..].iter_mut().zip(&g.theta_x) {
            *o = -*v;
        }
    })?;
    Ok(RobustParams::from_flat(&flat))
}

/// Grid search over learning rate and batch size, scored by
/// [`relative_nll`] on a held-out slice, then refit on all samples.
pub fn train_with_grid<T: Scalar>(
    dataset: &BanditDataset<T>,
    ws: &[T],
    base: &BaseDistribution<T>,
    fm: &FeatureMap,
    cfg: &TrainConfig,
    grid: &GridSearch,
) -> Result<(RobustParams<T>, TrainConfig)> {
    check_ratios(dataset, ws)?;
    optim::select_and_fit(
        dataset.len(),
        cfg,
        grid,
        |idx, c| train_on(dataset, ws, idx, base, fm, c),
        |params, val| relative_nll(params, base, fm, samples_at(dataset, ws, val)).as_f64(),
    )
}

/// A trained robust model: parameters plus the pieces needed to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustRewardModel<T> {
    pub params: RobustParams<T>,
    pub base: BaseDistribution<T>,
    pub fm: FeatureMap,
}

impl<T: Scalar> RobustRewardModel<T> {
    pub fn predict(&self, ctx: Context<'_, T>, a: usize, w: T) -> GaussianPrediction<T> {
        predict(&self.params, &self.base, &self.fm, ctx.x, a, w)
    }

    pub fn to_record(&self) -> RobustModelRecord {
        RobustModelRecord {
            theta_r: self.params.theta_r.as_f64(),
            theta_x: self.params.theta_x.iter().map(|v| v.as_f64()).collect(),
            mu0: self.base.mu0.as_f64(),
            sigma0_sq: self.base.sigma0_sq.as_f64(),
            feature_map_mode: self.fm.mode,
            d: self.fm.d,
            k: self.fm.k,
        }
    }

    pub fn from_record(rec: &RobustModelRecord) -> Result<Self> {
        let fm = FeatureMap::new(rec.feature_map_mode, rec.d, rec.k);
        if rec.theta_x.len() != fm.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: fm.output_dim(),
                got: rec.theta_x.len(),
            });
        }
        Ok(Self {
            params: RobustParams {
                theta_r: T::lit(rec.theta_r),
                theta_x: rec.theta_x.iter().map(|&v| T::lit(v)).collect(),
            },
            base: BaseDistribution::new(T::lit(rec.mu0), T::lit(rec.sigma0_sq))?,
            fm,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(s)?)
    }
}

/// JSON form of a trained robust model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustModelRecord {
    pub theta_r: f64,
    pub theta_x: Vec<f64>,
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub feature_map_mode: FeatureMode,
    pub d: usize,
    pub k: usize,
}
