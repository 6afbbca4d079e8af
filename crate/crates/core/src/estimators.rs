//! Policy-value estimators.
//!
//! Five primitives (DM, IPS, SnIPS, DR, SnDR) cover every named estimator;
//! the names differ only in which reward model and which importance weights
//! are plugged in. [`build_suite`] does the wiring.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{BanditDataset, Context, StochasticPolicy};
use crate::error::{Error, Result};
use crate::linear::LinearRewardModel;
use crate::ratio::RatioModel;
use crate::robust::RobustRewardModel;
use crate::scalar::Scalar;

/// Predicted mean reward for every action at a context.
pub trait RewardFn<T: Scalar>: Send + Sync {
    fn predict_all(&self, ctx: Context<'_, T>, out: &mut [T]) -> Result<()>;

    fn predict(&self, ctx: Context<'_, T>, a: usize, k: usize) -> Result<T> {
        let mut out = vec![T::zero(); k];
        self.predict_all(ctx, &mut out)?;
        Ok(out[a])
    }

    fn name(&self) -> &str;
}

impl<T: Scalar> RewardFn<T> for LinearRewardModel<T> {
    fn predict_all(&self, ctx: Context<'_, T>, out: &mut [T]) -> Result<()> {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.predict(ctx, a);
        }
        Ok(())
    }

    fn name(&self) -> &str {
        "least_squares"
    }
}

/// A robust model evaluated at `W(x, a)` from a ratio model, or at `W = 1`
/// when no ratio model is given.
pub struct RobustRewardFn<T: Scalar> {
    pub model: RobustRewardModel<T>,
    pub ratio: Option<(RatioModel<T>, Arc<dyn StochasticPolicy<T>>)>,
    pub name: String,
}

impl<T: Scalar> RewardFn<T> for RobustRewardFn<T> {
    fn predict_all(&self, ctx: Context<'_, T>, out: &mut [T]) -> Result<()> {
        let ws = match &self.ratio {
            Some((ratio, target)) => ratio.ratios_all(ctx, target.as_ref())?,
            None => vec![T::one(); out.len()],
        };
        for (a, (o, w)) in out.iter_mut().zip(ws).enumerate() {
            *o = self.model.predict(ctx, a, w).mu;
        }
        Ok(())
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Any closure `(context, action) -> reward`.
pub struct FnReward<F> {
    pub f: F,
    pub name: String,
}

impl<T: Scalar, F> RewardFn<T> for FnReward<F>
where
    F: Fn(Context<'_, T>, usize) -> T + Send + Sync,
{
    fn predict_all(&self, ctx: Context<'_, T>, out: &mut [T]) -> Result<()> {
        for (a, o) in out.iter_mut().enumerate() {
            *o = (self.f)(ctx, a);
        }
        Ok(())
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueEstimate<T> {
    pub value: T,
    pub estimator: String,
    pub n: usize,
}

fn finite<T: Scalar>(value: T, estimator: &str, n: usize) -> Result<PolicyValueEstimate<T>> {
    if !value.is_finite() {
        return Err(Error::InvalidSample {
            index: 0,
            reason: format!("{estimator} produced a non-finite value"),
        });
    }
    Ok(PolicyValueEstimate {
        value,
        estimator: estimator.to_string(),
        n,
    })
}

/// `mean_x sum_a pi(a|x) reward(x, a)`, exact over actions.
pub fn estimate_dm<T: Scalar>(
    reward: &dyn RewardFn<T>,
    contexts: &[Context<'_, T>],
    pi: &dyn StochasticPolicy<T>,
) -> Result<PolicyValueEstimate<T>> {
    if contexts.is_empty() {
        return Err(Error::Empty("contexts"));
    }
    let k = pi.num_actions();
    let mut p = vec![T::zero(); k];
    let mut r = vec![T::zero(); k];
    let mut total = T::zero();
    for &ctx in contexts {
        pi.probs_into(ctx, &mut p);
        reward.predict_all(ctx, &mut r)?;
        total += p.iter().zip(&r).map(|(&a, &b)| a * b).sum::<T>();
    }
    finite(total / T::count(contexts.len()), "DM", contexts.len())
}

/// `mean(r w)` over `(r, w)` pairs.
pub fn estimate_ips<T: Scalar>(samples: &[(T, T)]) -> Result<PolicyValueEstimate<T>> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let s: T = samples.iter().map(|&(r, w)| r * w).sum();
    finite(s / T::count(samples.len()), "IPS", samples.len())
}

/// `sum(r w) / sum(w)`.
pub fn estimate_snips<T: Scalar>(samples: &[(T, T)]) -> Result<PolicyValueEstimate<T>> {
    let (num, den) = samples
        .iter()
        .fold((T::zero(), T::zero()), |(n, d), &(r, w)| (n + r * w, d + w));
    if !(den > T::zero()) {
        return Err(Error::ZeroWeightSum);
    }
    finite(num / den, "SnIPS", samples.len())
}

/// A logged reward, the reward model's prediction for the logged action and
/// the importance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrTerm<T> {
    pub reward: T,
    pub predicted: T,
    pub weight: T,
}

/// Evaluates `reward` on each logged sample.
pub fn dr_terms<T: Scalar>(
    samples: &BanditDataset<T>,
    weights: &[T],
    reward: &dyn RewardFn<T>,
) -> Result<Vec<DrTerm<T>>> {
    if weights.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: weights.len(),
        });
    }
    let mut r = vec![T::zero(); samples.k()];
    samples
        .samples()
        .iter()
        .zip(weights)
        .map(|(s, &w)| {
            reward.predict_all(s.ctx(), &mut r)?;
            Ok(DrTerm {
                reward: s.reward,
                predicted: r[s.action],
                weight: w,
            })
        })
        .collect()
}

/// `dm_value + mean((r - r_hat) w)`.
pub fn estimate_dr<T: Scalar>(terms: &[DrTerm<T>], dm_value: T) -> Result<PolicyValueEstimate<T>> {
    if terms.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let c: T = terms.iter().map(|t| (t.reward - t.predicted) * t.weight).sum();
    finite(dm_value + c / T::count(terms.len()), "DR", terms.len())
}

/// `dm_value + sum((r - r_hat) w) / sum(w)`.
pub fn estimate_sndr<T: Scalar>(terms: &[DrTerm<T>], dm_value: T) -> Result<PolicyValueEstimate<T>> {
    let (num, den) = terms.iter().fold((T::zero(), T::zero()), |(n, d), t| {
        (n + (t.reward - t.predicted) * t.weight, d + t.weight)
    });
    if !(den > T::zero()) {
        return Err(Error::ZeroWeightSum);
    }
    finite(dm_value + num / den, "SnDR", terms.len())
}

/// Every named estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EstimatorName {
    Dm,
    Ips,
    SnIps,
    Dr,
    SnDr,
    IpsGcs,
    SnIpsGcs,
    DmR,
    DrR,
    SnDrR,
    DmPs,
    DrPs,
    SnDrPs,
    DmGcs,
    DrGcs,
    SnDrGcs,
}

/// Which reward model an estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardSource {
    None,
    LeastSquares,
    RobustUnit,
    RobustPs,
    RobustGcs,
}

/// Which primitive an estimator reduces to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Dm,
    Ips,
    SnIps,
    Dr,
    SnDr,
}

impl EstimatorName {
    pub const ALL: [EstimatorName; 16] = [
        Self::Dm,
        Self::Ips,
        Self::SnIps,
        Self::Dr,
        Self::SnDr,
        Self::IpsGcs,
        Self::SnIpsGcs,
        Self::DmR,
        Self::DrR,
        Self::SnDrR,
        Self::DmPs,
        Self::DrPs,
        Self::SnDrPs,
        Self::DmGcs,
        Self::DrGcs,
        Self::SnDrGcs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dm => "DM",
            Self::Ips => "IPS",
            Self::SnIps => "SnIPS",
            Self::Dr => "DR",
            Self::SnDr => "SnDR",
            Self::IpsGcs => "IPS-GCS",
            Self::SnIpsGcs => "SnIPS-GCS",
            Self::DmR => "DM(R)",
            Self::DrR => "DR(R)",
            Self::SnDrR => "SnDR(R)",
            Self::DmPs => "DM-PS",
            Self::DrPs => "DR-PS",
            Self::SnDrPs => "SnDR-PS",
            Self::DmGcs => "DM-GCS",
            Self::DrGcs => "DR-GCS",
            Self::SnDrGcs => "SnDR-GCS",
        }
    }

    pub fn primitive(self) -> Primitive {
        use EstimatorName::*;
        match self {
            Dm | DmR | DmPs | DmGcs => Primitive::Dm,
            Ips | IpsGcs => Primitive::Ips,
            SnIps | SnIpsGcs => Primitive::SnIps,
            Dr | DrR | DrPs | DrGcs => Primitive::Dr,
            SnDr | SnDrR | SnDrPs | SnDrGcs => Primitive::SnDr,
        }
    }

    pub fn reward_source(self) -> RewardSource {
        use EstimatorName::*;
        match self {
            Ips | SnIps | IpsGcs | SnIpsGcs => RewardSource::None,
            Dm | Dr | SnDr => RewardSource::LeastSquares,
            DmR | DrR | SnDrR => RewardSource::RobustUnit,
            DmPs | DrPs | SnDrPs => RewardSource::RobustPs,
            DmGcs | DrGcs | SnDrGcs => RewardSource::RobustGcs,
        }
    }

    /// Importance weights come from the covariate-shift ratio model.
    pub fn uses_gcs_weights(self) -> bool {
        use EstimatorName::*;
        matches!(self, IpsGcs | SnIpsGcs | DrGcs | SnDrGcs)
    }

    pub fn needs_gcs(self) -> bool {
        self.uses_gcs_weights() || self.reward_source() == RewardSource::RobustGcs
    }

    /// Family used for best-of reporting: the DM member names the family.
    pub fn family(self) -> &'static str {
        match self.reward_source() {
            RewardSource::None => self.as_str(),
            RewardSource::LeastSquares => "DM",
            RewardSource::RobustUnit => "DM(R)",
            RewardSource::RobustPs => "DM-PS",
            RewardSource::RobustGcs => "DM-GCS",
        }
    }
}

impl fmt::Display for EstimatorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

impl Serialize for EstimatorName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EstimatorName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Reward models available to [`build_suite`].
#[derive(Default)]
pub struct SuiteModels<'a, T: Scalar> {
    pub least_squares: Option<&'a dyn RewardFn<T>>,
    pub robust_unit: Option<&'a dyn RewardFn<T>>,
    pub robust_ps: Option<&'a dyn RewardFn<T>>,
    pub robust_gcs: Option<&'a dyn RewardFn<T>>,
}

impl<'a, T: Scalar> SuiteModels<'a, T> {
    fn get(&self, src: RewardSource) -> Option<&'a dyn RewardFn<T>> {
        match src {
            RewardSource::None => None,
            RewardSource::LeastSquares => self.least_squares,
            RewardSource::RobustUnit => self.robust_unit,
            RewardSource::RobustPs => self.robust_ps,
            RewardSource::RobustGcs => self.robust_gcs,
        }
    }
}

/// Evaluates every requested estimator on the evaluation logging data.
///
/// DM terms average over the contexts of `eval`; weights come from
/// `ps_ratio`, or `gcs_ratio` for the covariate-shift names. Reward models
/// are evaluated once per sample and shared across estimators.
pub fn build_suite<T: Scalar>(
    names: &[EstimatorName],
    eval: &BanditDataset<T>,
    target: &dyn StochasticPolicy<T>,
    models: &SuiteModels<'_, T>,
    ps_ratio: &RatioModel<T>,
    gcs_ratio: Option<&RatioModel<T>>,
) -> Result<BTreeMap<EstimatorName, PolicyValueEstimate<T>>> {
    if eval.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    for &n in names {
        if n.needs_gcs() && gcs_ratio.is_none() {
            return Err(Error::MissingGcsRatio(n.to_string()));
        }
        let src = n.reward_source();
        if src != RewardSource::None && models.get(src).is_none() {
            return Err(Error::MissingRewardModel(n.to_string()));
        }
    }
    let want = |pred: &dyn Fn(EstimatorName) -> bool| names.iter().any(|&n| pred(n));
    let need_ps_w = want(&|n| n.primitive() != Primitive::Dm && !n.uses_gcs_weights());
    let need_gcs_w = want(&|n| n.uses_gcs_weights());
    let sources = [
        RewardSource::LeastSquares,
        RewardSource::RobustUnit,
        RewardSource::RobustPs,
        RewardSource::RobustGcs,
    ];
    let active: Vec<RewardSource> = sources
        .into_iter()
        .filter(|&s| want(&|n| n.reward_source() == s))
        .collect();

    let k = eval.k();
    let n = eval.len();
    let mut pi = vec![T::zero(); k];
    let mut pred = vec![T::zero(); k];
    let mut ps_w = Vec::with_capacity(n);
    let mut gcs_w = Vec::with_capacity(n);
    let mut dm_sum: Vec<T> = vec![T::zero(); active.len()];
    let mut logged_pred: Vec<Vec<T>> = vec![Vec::with_capacity(n); active.len()];

    for s in eval.samples() {
        let ctx = s.ctx();
        target.probs_into(ctx, &mut pi);
        if need_ps_w {
            let beta = ps_ratio.logging.prob(ctx, s.action);
            ps_w.push(ps_ratio.weight_from(beta, pi[s.action], T::one()));
        }
        if need_gcs_w {
            let g = gcs_ratio.expect("checked above");
            gcs_w.push(g.ips_weight(ctx, s.action, target)?);
        }
        for (j, &src) in active.iter().enumerate() {
            models.get(src).expect("checked above").predict_all(ctx, &mut pred)?;
            dm_sum[j] += pi.iter().zip(&pred).map(|(&p, &r)| p * r).sum::<T>();
            logged_pred[j].push(pred[s.action]);
        }
    }

    let mut out = BTreeMap::new();
    for &name in names {
        let weights = if name.uses_gcs_weights() { &gcs_w } else { &ps_w };
        let pairs = || -> Vec<(T, T)> {
            eval.samples().iter().zip(weights).map(|(s, &w)| (s.reward, w)).collect()
        };
        let slot = active.iter().position(|&a| a == name.reward_source());
        let dm_value = slot.map(|j| dm_sum[j] / T::count(n));
        let terms = || -> Vec<DrTerm<T>> {
            let j = slot.expect("reward model is active");
            eval.samples()
                .iter()
                .zip(weights)
                .zip(&logged_pred[j])
                .map(|((s, &w), &p)| DrTerm {
                    reward: s.reward,
                    predicted: p,
                    weight: w,
                })
                .collect()
        };
        let mut est = match name.primitive() {
            Primitive::Dm => finite(dm_value.expect("reward model is active"), "DM", n)?,
            Primitive::Ips => estimate_ips(&pairs())?,
            Primitive::SnIps => estimate_snips(&pairs())?,
            Primitive::Dr => estimate_dr(&terms(), dm_value.expect("reward model is active"))?,
            Primitive::SnDr => estimate_sndr(&terms(), dm_value.expect("reward model is active"))?,
        };
        est.estimator = name.to_string();
        out.insert(name, est);
    }
    Ok(out)
}
