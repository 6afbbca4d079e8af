//! Least-squares reward regression on `phi(x, a)`, the empirical risk
//! minimization baseline for the direct method.

use serde::{Deserialize, Serialize};

use crate::data::{BanditDataset, Context};
use crate::error::Result;
use crate::features::FeatureMap;
use crate::optim::{self, GridSearch, TrainConfig};
use crate::robust::RobustParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRewardModel<T> {
    pub weights: Vec<T>,
    pub fm: FeatureMap,
}

impl<T: Scalar> LinearRewardModel<T> {
    pub fn predict(&self, ctx: Context<'_, T>, a: usize) -> T {
        self.fm.dot(&self.weights, ctx.x, a)
    }

    fn mse(&self, dataset: &BanditDataset<T>, idx: &[usize]) -> f64 {
        let sq: T = idx
            .iter()
            .map(|&i| {
                let s = &dataset.samples()[i];
                let e = self.predict(s.ctx(), s.action) - s.reward;
                e * e
            })
            .sum();
        sq.as_f64() / idx.len().max(1) as f64
    }
}

fn fit_on<T: Scalar>(
    dataset: &BanditDataset<T>,
    idx: &[usize],
    fm: &FeatureMap,
    cfg: &TrainConfig,
) -> Result<LinearRewardModel<T>> {
    // Same initialization scheme as the robust model, minus theta_r.
    let mut w = RobustParams::<T>::random(fm.output_dim(), cfg.seed).theta_x;
    let l2 = T::lit(cfg.l2_reg);
    let two = T::lit(2.0);
    optim::minimize(idx.len(), &mut w, cfg, |batch, params, g| {
        g.iter_mut().for_each(|v| *v = T::zero());
        for &b in batch {
            let s = &dataset.samples()[idx[b]];
            let resid = fm.dot(params, &s.context, s.action) - s.reward;
            fm.axpy(resid, &s.context, s.action, g);
        }
        let inv = T::count(batch.len()).recip();
        for (gj, &pj) in g.iter_mut().zip(params) {
            *gj = *gj * inv + two * l2 * pj;
        }
    })?;
    Ok(LinearRewardModel { weights: w, fm: *fm })
}

/// Mean squared error regression by mini-batch SGD.
pub fn fit_least_squares<T: Scalar>(
    dataset: &BanditDataset<T>,
    fm: &FeatureMap,
    cfg: &TrainConfig,
) -> Result<LinearRewardModel<T>> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    fit_on(dataset, &all, fm, cfg)
}

/// Grid search scored by validation MSE, refit on all samples.
pub fn fit_least_squares_with_grid<T: Scalar>(
    dataset: &BanditDataset<T>,
    fm: &FeatureMap,
    cfg: &TrainConfig,
    grid: &GridSearch,
) -> Result<(LinearRewardModel<T>, TrainConfig)> {
    optim::select_and_fit(
        dataset.len(),
        cfg,
        grid,
        |idx, c| fit_on(dataset, idx, fm, c),
        |m, val| m.mse(dataset, val),
    )
}
