//! One repetition: generate, fit the nuisance and reward models, evaluate.

use std::collections::BTreeMap;
use std::sync::Arc;

use robust_ope::estimators::{RewardSource, RobustRewardFn};
use robust_ope::linear::fit_least_squares_with_grid;
use robust_ope::ratio::{fit_context_ratio, fit_propensity, ContextRatio};
use robust_ope::robust::train_with_grid;
use robust_ope::scenarios::{generate, ScenarioOptions};
use robust_ope::{
    build_suite, BanditDataset, BaseDistribution, ClassificationData, Condition, EstimatorName,
    FeatureMap, RatioModel, Result, RewardFn, RobustRewardModel, StochasticPolicy, SuiteModels, TrainConfig,
};

use crate::config::TrainingSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub true_value: f64,
    pub estimates: BTreeMap<EstimatorName, f64>,
}

// Offsets that separate the training seeds derived from one repetition seed.
const PROPENSITY_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const CONTEXT_RATIO_SEED: u64 = 0xbf58_476d_1ce4_e5b9;
const REWARD_SEED: u64 = 0x94d0_49bb_1331_11eb;

#[allow(clippy::too_many_arguments)]
fn robust_fit(
    ds: &BanditDataset<f64>,
    ratio: Option<&RatioModel<f64>>,
    target: &Arc<dyn StochasticPolicy<f64>>,
    base: &BaseDistribution<f64>,
    fm: &FeatureMap,
    training: &TrainingSpec,
    seed: u64,
    name: &str,
) -> Result<RobustRewardFn<f64>> {
    let ws = match ratio {
        Some(r) => ds
            .samples()
            .iter()
            .map(|s| r.ratio_w(s.ctx(), s.action, target.as_ref()))
            .collect::<Result<Vec<_>>>()?,
        None => vec![1.0; ds.len()],
    };
    let (params, _) = train_with_grid(ds, &ws, base, fm, &training.base_config(seed), &training.robust_grid())?;
    Ok(RobustRewardFn {
        model: RobustRewardModel {
            params,
            base: *base,
            fm: *fm,
        },
        ratio: ratio.map(|r| (r.clone(), target.clone())),
        name: name.to_string(),
    })
}

/// Runs repetition `rep` of `cond` and returns every requested estimate
/// together with the true target value.
pub fn run_repetition(
    cond: &Condition,
    data: &ClassificationData<f64>,
    rep: usize,
    names: &[EstimatorName],
    training: &TrainingSpec,
    opts: &ScenarioOptions,
) -> Result<Repetition> {
    let scn = generate(cond, data, rep, opts)?;
    let seed = cond.rep_seed(rep);
    let needs = |src: RewardSource| names.iter().any(|n| n.reward_source() == src);
    let needs_gcs = names.iter().any(|n| n.needs_gcs());

    let logging: Arc<dyn StochasticPolicy<f64>> = if cond.knowledge.propensity_known {
        scn.logging.clone()
    } else {
        Arc::new(fit_propensity(
            &scn.train_logging,
            &training.classifier_config(seed ^ PROPENSITY_SEED),
        )?)
    };
    let fitted_beta = !cond.knowledge.propensity_known;
    let ps_ratio = RatioModel::policy_shift(logging.clone(), fitted_beta);
    let gcs_ratio = if needs_gcs {
        let (cr, fitted): (Arc<dyn ContextRatio<f64>>, bool) = if cond.knowledge.context_ratio_known {
            (Arc::new(scn.known_context_ratio()), fitted_beta)
        } else {
            let source: Vec<&[f64]> = scn
                .train_logging
                .samples()
                .iter()
                .map(|s| s.context.as_slice())
                .collect();
            let target: Vec<&[f64]> = scn.target_contexts().iter().map(|c| c.x).collect();
            let m = fit_context_ratio(&source, &target, &training.classifier_config(seed ^ CONTEXT_RATIO_SEED))?;
            (Arc::new(m), true)
        };
        Some(RatioModel::covariate_shift(logging.clone(), cr, fitted))
    } else {
        None
    };

    let fm = FeatureMap::new(training.feature_mode, scn.train_logging.d(), scn.k);
    let base = BaseDistribution::new(training.mu0, training.sigma0_sq)?;
    let rseed = seed ^ REWARD_SEED;
    let ds = &scn.train_logging;
    let least_squares = if needs(RewardSource::LeastSquares) {
        let cfg = TrainConfig {
            learning_rate: training.least_squares_learning_rates[0],
            ..training.base_config(rseed)
        };
        Some(fit_least_squares_with_grid(ds, &fm, &cfg, &training.least_squares_grid())?.0)
    } else {
        None
    };
    let robust_unit = needs(RewardSource::RobustUnit)
        .then(|| robust_fit(ds, None, &scn.target, &base, &fm, training, rseed, "robust"))
        .transpose()?;
    let robust_ps = needs(RewardSource::RobustPs)
        .then(|| robust_fit(ds, Some(&ps_ratio), &scn.target, &base, &fm, training, rseed, "robust-ps"))
        .transpose()?;
    let robust_gcs = match (&gcs_ratio, needs(RewardSource::RobustGcs)) {
        (Some(r), true) => Some(robust_fit(ds, Some(r), &scn.target, &base, &fm, training, rseed, "robust-gcs")?),
        _ => None,
    };

    let models = SuiteModels {
        least_squares: least_squares.as_ref().map(|m| m as &dyn RewardFn<f64>),
        robust_unit: robust_unit.as_ref().map(|m| m as &dyn RewardFn<f64>),
        robust_ps: robust_ps.as_ref().map(|m| m as &dyn RewardFn<f64>),
        robust_gcs: robust_gcs.as_ref().map(|m| m as &dyn RewardFn<f64>),
    };
    let est = build_suite(names, &scn.eval_logging, scn.target.as_ref(), &models, &ps_ratio, gcs_ratio.as_ref())?;
    Ok(Repetition {
        true_value: scn.true_value,
        estimates: est.into_iter().map(|(k, v)| (k, v.value)).collect(),
    })
}
