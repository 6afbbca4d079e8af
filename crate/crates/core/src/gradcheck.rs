//! Finite-difference check of the robust model's gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::features::{FeatureMap, FeatureMode};
use crate::robust::{batch_gradient, relative_nll, BaseDistribution, RobustParams, WeightedSample};

/// Settings for [`run`].
#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub draws: usize,
    pub batch_size: usize,
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            draws: 100,
            batch_size: 20,
            step: 1e-5,
            rel_tol: 1e-5,
            abs_floor: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub draws: usize,
    pub coordinates: usize,
    pub failures: usize,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares the analytic gradient of the relative NLL against central
/// differences on random parameters, batches and ratios.
///
/// A coordinate passes when `|fd - analytic| <= max(rel_tol |analytic|,
/// abs_floor)`.
pub fn run(cfg: &GradcheckConfig) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradcheckReport {
        draws: cfg.draws,
        coordinates: 0,
        failures: 0,
        max_rel_error: 0.0,
    };
    for draw in 0..cfg.draws {
        let d = rng.random_range(1..5);
        let k = rng.random_range(2..5);
        let mode = if draw % 2 == 0 {
            FeatureMode::Concat
        } else {
            FeatureMode::Interaction
        };
        let fm = FeatureMap::new(mode, d, k);
        let base = BaseDistribution::new(rng.random_range(0.0..1.0), rng.random_range(0.5..2.0))
            .expect("valid base");
        let params = RobustParams {
            theta_r: rng.random_range(0.05..1.0),
            theta_x: (0..fm.output_dim()).map(|_| rng.random_range(-0.5..0.5)).collect(),
        };
        let xs: Vec<Vec<f64>> = (0..cfg.batch_size)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let rest: Vec<(usize, f64, f64)> = (0..cfg.batch_size)
            .map(|_| {
                (
                    rng.random_range(0..k),
                    f64::from(u8::from(rng.random_bool(0.5))),
                    rng.random_range(0.05..5.0),
                )
            })
            .collect();
        let batch = || {
            xs.iter().zip(&rest).map(|(x, &(action, reward, w))| WeightedSample {
                x,
                action,
                reward,
                w,
            })
        };
        let g = batch_gradient(&params, &base, &fm, batch(), 0.0);
        let (gr, gx) = g.nll_gradient();
        let analytic: Vec<f64> = std::iter::once(gr).chain(gx).collect();
        for (j, &an) in analytic.iter().enumerate() {
            let eval = |delta: f64| {
                let mut p = params.clone();
                if j == 0 {
                    p.theta_r += delta;
                } else {
                    p.theta_x[j - 1] += delta;
                }
                relative_nll(&p, &base, &fm, batch())
            };
            let fd = (eval(cfg.step) - eval(-cfg.step)) / (2.0 * cfg.step);
            let err = (fd - an).abs();
            report.coordinates += 1;
            if err > (cfg.rel_tol * an.abs()).max(cfg.abs_floor) {
                report.failures += 1;
            }
            report.max_rel_error = report.max_rel_error.max(err / an.abs().max(cfg.abs_floor));
        }
    }
    report
}
