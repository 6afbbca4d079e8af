//! Density ratios `W(x, a) = P_s(x, a) / P_t(x, a)` and importance weights.
//!
//! `P_s(x, a) = P_s(x) beta(a|x)` and `P_t(x, a) = P_t(x) pi(a|x)`, so a
//! ratio model is a logging policy (known or fitted) plus, under covariate
//! shift, a context ratio `P_s(x) / P_t(x)`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{BanditDataset, Context, PolicyDescriptor, StochasticPolicy};
use crate::error::{Error, Result};
use crate::logistic::{BinaryLogistic, MultinomialLogistic};
use crate::optim::TrainConfig;
use crate::scalar::Scalar;

/// Floor applied to estimated probabilities and weight denominators.
pub const PROB_FLOOR: f64 = 1e-3;

/// Raises every entry of the distribution `p` to at least `floor` and
/// rescales the rest so the total stays one. Entries that end up at the
/// floor are exactly `floor`.
pub fn floor_and_renormalize<T: Scalar>(p: &mut [T], floor: T) {
    let k = p.len();
    if k == 0 {
        return;
    }
    if floor * T::count(k) >= T::one() {
        p.iter_mut().for_each(|v| *v = T::count(k).recip());
        return;
    }
    let mut pinned = vec![false; k];
    loop {
        let n_pinned = pinned.iter().filter(|&&b| b).count();
        let free_mass: T = p
            .iter()
            .zip(&pinned)
            .filter(|(_, &b)| !b)
            .map(|(&v, _)| v)
            .sum();
        let budget = T::one() - floor * T::count(n_pinned);
        let mut changed = false;
        for (v, pin) in p.iter_mut().zip(pinned.iter_mut()) {
            if *pin {
                *v = floor;
            } else if free_mass > T::zero() {
                *v = *v * budget / free_mass;
            }
            if !*pin && *v < floor {
                *pin = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Multinomial logistic estimate of the logging policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityModel<T> {
    pub classifier: MultinomialLogistic<T>,
    /// Actions present in the training data. The others have maximum
    /// likelihood probability zero and are pinned at the floor.
    pub observed: Vec<bool>,
    pub prob_floor: T,
}

impl<T: Scalar> StochasticPolicy<T> for PropensityModel<T> {
    fn num_actions(&self) -> usize {
        self.classifier.k
    }

    fn probs_into(&self, ctx: Context<'_, T>, out: &mut [T]) {
        self.classifier.probs_into(ctx.x, out);
        for (p, &seen) in out.iter_mut().zip(&self.observed) {
            if !seen {
                *p = T::zero();
            }
        }
        floor_and_renormalize(out, self.prob_floor);
    }

    fn descriptor(&self) -> PolicyDescriptor {
        PolicyDescriptor::new("fitted_propensity")
    }
}

/// Fits `beta_hat(a|x)` on the logged (context, action) pairs.
pub fn fit_propensity<T: Scalar>(
    samples: &BanditDataset<T>,
    cfg: &TrainConfig,
) -> Result<PropensityModel<T>> {
    if samples.distinct_actions() < 2 {
        return Err(Error::TooFewActions);
    }
    let rows: Vec<&[T]> = samples.samples().iter().map(|s| s.context.as_slice()).collect();
    let labels: Vec<usize> = samples.samples().iter().map(|s| s.action).collect();
    let classifier = MultinomialLogistic::fit(&rows, &labels, samples.k(), cfg)?;
    let mut observed = vec![false; samples.k()];
    labels.iter().for_each(|&a| observed[a] = true);
    Ok(PropensityModel {
        classifier,
        observed,
        prob_floor: T::lit(PROB_FLOOR),
    })
}

/// `P_s(x) / P_t(x)` for a context.
pub trait ContextRatio<T: Scalar>: Send + Sync {
    fn ratio(&self, ctx: Context<'_, T>) -> Result<T>;
}

/// Ground-truth context ratios looked up by context id.
#[derive(Debug, Clone, Default)]
pub struct KnownContextRatio<T> {
    pub values: HashMap<usize, T>,
}

impl<T: Scalar> ContextRatio<T> for KnownContextRatio<T> {
    fn ratio(&self, ctx: Context<'_, T>) -> Result<T> {
        self.values
            .get(&ctx.id)
            .copied()
            .ok_or(Error::UnknownContext(ctx.id))
    }
}

/// Discriminative context-ratio estimate: a source-vs-target classifier
/// turned into a ratio by Bayes' rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextRatioModel<T> {
    pub classifier: BinaryLogistic<T>,
    /// `n_target / n_source`.
    pub prior_correction: T,
    pub prob_floor: T,
}

impl<T: Scalar> ContextRatioModel<T> {
    /// `p / (1 - p) * prior_correction` with `p` clipped to
    /// `[floor, 1 - floor]`.
    pub fn ratio_from_probability(p_source: T, prior_correction: T, floor: T) -> T {
        let p = p_source.max(floor).min(T::one() - floor);
        p / (T::one() - p) * prior_correction
    }

    pub fn ratio_at(&self, x: &[T]) -> T {
        Self::ratio_from_probability(self.classifier.prob(x), self.prior_correction, self.prob_floor)
    }
}

impl<T: Scalar> ContextRatio<T> for ContextRatioModel<T> {
    fn ratio(&self, ctx: Context<'_, T>) -> Result<T> {
        Ok(self.ratio_at(ctx.x))
    }
}

/// Fits a source (label 1) versus target (label 0) classifier.
pub fn fit_context_ratio<T: Scalar>(
    source: &[&[T]],
    target: &[&[T]],
    cfg: &TrainConfig,
) -> Result<ContextRatioModel<T>> {
    if source.is_empty() {
        return Err(Error::Empty("source contexts"));
    }
    if target.is_empty() {
        return Err(Error::Empty("target contexts"));
    }
    let rows: Vec<&[T]> = source.iter().chain(target).copied().collect();
    let labels: Vec<bool> = (0..rows.len()).map(|i| i < source.len()).collect();
    let classifier = BinaryLogistic::fit(&rows, &labels, cfg)?;
    Ok(ContextRatioModel {
        classifier,
        prior_correction: T::count(target.len()) / T::count(source.len()),
        prob_floor: T::lit(PROB_FLOOR),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    KnownPs,
    KnownGcs,
    FittedPs,
    FittedGcs,
}

impl RatioKind {
    pub fn is_gcs(self) -> bool {
        matches!(self, Self::KnownGcs | Self::FittedGcs)
    }
}

/// Supplies `W(x, a)` and the importance weight `1 / W` with floored
/// denominators.
#[derive(Clone)]
pub struct RatioModel<T: Scalar> {
    pub kind: RatioKind,
    pub logging: Arc<dyn StochasticPolicy<T>>,
    pub context_ratio: Option<Arc<dyn ContextRatio<T>>>,
    pub floor: T,
}

impl<T: Scalar> RatioModel<T> {
    pub fn policy_shift(logging: Arc<dyn StochasticPolicy<T>>, fitted: bool) -> Self {
        Self {
            kind: if fitted { RatioKind::FittedPs } else { RatioKind::KnownPs },
            logging,
            context_ratio: None,
            floor: T::lit(PROB_FLOOR),
        }
    }

    pub fn covariate_shift(
        logging: Arc<dyn StochasticPolicy<T>>,
        context_ratio: Arc<dyn ContextRatio<T>>,
        fitted: bool,
    ) -> Self {
        Self {
            kind: if fitted { RatioKind::FittedGcs } else { RatioKind::KnownGcs },
            logging,
            context_ratio: Some(context_ratio),
            floor: T::lit(PROB_FLOOR),
        }
    }

    fn context_factor(&self, ctx: Context<'_, T>) -> Result<T> {
        match (&self.context_ratio, self.kind.is_gcs()) {
            (Some(cr), true) => cr.ratio(ctx),
            (None, true) => Err(Error::MissingGcsRatio(format!("{:?}", self.kind))),
            _ => Ok(T::one()),
        }
    }

    /// `W` from already evaluated probabilities.
    pub fn ratio_from(&self, beta: T, pi: T, context_ratio: T) -> T {
        context_ratio * beta / pi.max(self.floor)
    }

    /// Importance weight from already evaluated probabilities.
    pub fn weight_from(&self, beta: T, pi: T, context_ratio: T) -> T {
        pi / (beta.max(self.floor) * context_ratio.max(self.floor))
    }

    pub fn ratio_w(
        &self,
        ctx: Context<'_, T>,
        a: usize,
        target: &dyn StochasticPolicy<T>,
    ) -> Result<T> {
        let cr = self.context_factor(ctx)?;
        Ok(self.ratio_from(self.logging.prob(ctx, a), target.prob(ctx, a), cr))
    }

    pub fn ips_weight(
        &self,
        ctx: Context<'_, T>,
        a: usize,
        target: &dyn StochasticPolicy<T>,
    ) -> Result<T> {
        let cr = self.context_factor(ctx)?;
        Ok(self.weight_from(self.logging.prob(ctx, a), target.prob(ctx, a), cr))
    }

    /// `W(x, a)` for every action at once.
    pub fn ratios_all(
        &self,
        ctx: Context<'_, T>,
        target: &dyn StochasticPolicy<T>,
    ) -> Result<Vec<T>> {
        let cr = self.context_factor(ctx)?;
        let beta = self.logging.probs(ctx);
        let pi = target.probs(ctx);
        Ok(beta
            .iter()
            .zip(&pi)
            .map(|(&b, &p)| self.ratio_from(b, p, cr))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FixedPolicy;

    fn fixed(p: &[f64]) -> Arc<dyn StochasticPolicy<f64>> {
        Arc::new(FixedPolicy {
            probs: p.to_vec(),
            descriptor: PolicyDescriptor::new("fixed"),
        })
    }

    struct Constant(f64);
    impl ContextRatio<f64> for Constant {
        fn ratio(&self, _: Context<'_, f64>) -> Result<f64> {
            Ok(self.0)
        }
    }

    const X: Context<'static, f64> = Context { id: 0, x: &[] };

    #[test]
    fn policy_shift_ratio_and_weight() {
        let m = RatioModel::policy_shift(fixed(&[0.5, 0.5]), false);
        let pi = FixedPolicy {
            probs: vec![0.25, 0.75],
            descriptor: PolicyDescriptor::new("pi"),
        };
        assert_eq!(m.ratio_w(X, 0, &pi).unwrap(), 2.0);

        let m = RatioModel::policy_shift(fixed(&[0.25, 0.75]), false);
        let pi = fixed(&[0.5, 0.5]);
        assert_eq!(m.ips_weight(X, 0, pi.as_ref()).unwrap(), 2.0);
    }

    #[test]
    fn covariate_shift_products() {
        let m = RatioModel::covariate_shift(fixed(&[0.5, 0.5]), Arc::new(Constant(3.0)), false);
        assert_eq!(m.ratio_w(X, 0, fixed(&[0.25, 0.75]).as_ref()).unwrap(), 6.0);

        let m = RatioModel::covariate_shift(fixed(&[0.25, 0.75]), Arc::new(Constant(0.5)), false);
        assert_eq!(m.ips_weight(X, 0, fixed(&[0.5, 0.5]).as_ref()).unwrap(), 4.0);
    }

    #[test]
    fn zero_logging_probability_gives_zero_ratio() {
        let m = RatioModel::policy_shift(fixed(&[0.0, 1.0]), false);
        assert_eq!(m.ratio_w(X, 0, fixed(&[0.5, 0.5]).as_ref()).unwrap(), 0.0);
    }

    #[test]
    fn tiny_propensity_is_floored() {
        let m = RatioModel::policy_shift(fixed(&[1e-6, 1.0 - 1e-6]), false);
        let w = m.ips_weight(X, 0, fixed(&[1.0, 0.0]).as_ref()).unwrap();
        assert!((w - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn gcs_without_context_ratio_errors() {
        let m = RatioModel {
            kind: RatioKind::FittedGcs,
            logging: fixed(&[0.5, 0.5]),
            context_ratio: None,
            floor: PROB_FLOOR,
        };
        assert!(matches!(
            m.ratio_w(X, 0, fixed(&[0.5, 0.5]).as_ref()),
            Err(Error::MissingGcsRatio(_))
        ));
    }

    #[test]
    fn known_context_ratio_lookup() {
        let known = KnownContextRatio {
            values: HashMap::from([(4, 1.5)]),
        };
        assert_eq!(known.ratio(Context::new(4, &[0.0])).unwrap(), 1.5);
        assert!(matches!(
            known.ratio(Context::new(5, &[0.0])),
            Err(Error::UnknownContext(5))
        ));
    }

    #[test]
    fn bayes_identity() {
        let r = ContextRatioModel::ratio_from_probability(0.75, 1.0, PROB_FLOOR);
        assert_eq!(r, 3.0);
        let r = ContextRatioModel::ratio_from_probability(0.75, 0.5, PROB_FLOOR);
        assert_eq!(r, 1.5);
        let r = ContextRatioModel::ratio_from_probability(1.0, 1.0, PROB_FLOOR);
        assert!(r.is_finite() && (r - 999.0).abs() < 1e-9);
    }

    #[test]
    fn floor_keeps_a_distribution() {
        let mut p = vec![0.0, 1e-5, 0.3, 0.7 - 1e-5];
        floor_and_renormalize(&mut p, 1e-3);
        assert_eq!(p[0], 1e-3);
        assert_eq!(p[1], 1e-3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 1e-3));

        let mut p = vec![0.25; 4];
        floor_and_renormalize(&mut p, 1e-3);
        assert_eq!(p, vec![0.25; 4]);
    }
}
