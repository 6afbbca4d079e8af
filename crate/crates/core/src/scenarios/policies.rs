//! Logging and target policy families.

use std::sync::Arc;

use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{context_uniform, stream_rng};
use crate::data::{Context, FixedPolicy, PolicyDescriptor, StochasticPolicy};
use crate::error::{Error, Result};
use crate::logistic::MultinomialLogistic;
use crate::scalar::Scalar;

/// Parameters of one policy family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PolicySpec {
    /// `lambda + zeta * u` on the classifier's action, `u ~ U(-0.5, 0.5)`
    /// drawn once per context; the rest spread evenly.
    Softened { lambda: f64, zeta: f64 },
    /// Softened around the true label.
    SoftenedPerfect { lambda: f64 },
    /// Softened around the true label with a per-class `lambda` taken from a
    /// seeded permutation of `1/k, 2/k, ..., 1`.
    DiverseSoftenedPerfect,
    /// `rho` on one seeded class, the rest spread evenly, for every context.
    Tweak1 { rho: f64 },
    /// One seeded `Dirichlet(gamma)` draw shared by all contexts. With
    /// `gamma = 0.1` it is mixed 0.95 / 0.05 with the uniform distribution.
    Dirichlet { gamma: f64 },
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match *self {
            Self::Softened { lambda, zeta } => {
                if !(zeta >= 0.0 && lambda - zeta / 2.0 >= 0.0 && lambda + zeta / 2.0 <= 1.0) {
                    return bad(format!("softened policy needs 0 <= lambda +- zeta/2 <= 1, got ({lambda}, {zeta})"));
                }
            }
            Self::SoftenedPerfect { lambda } => {
                if !(0.0..=1.0).contains(&lambda) {
                    return bad(format!("lambda must lie in [0, 1], got {lambda}"));
                }
            }
            Self::DiverseSoftenedPerfect => {}
            Self::Tweak1 { rho } => {
                if !(rho > 0.0 && rho < 1.0) {
                    return bad(format!("rho must lie in (0, 1), got {rho}"));
                }
            }
            Self::Dirichlet { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return bad(format!("gamma must be positive, got {gamma}"));
                }
            }
        }
        Ok(())
    }

    pub fn needs_classifier(&self) -> bool {
        matches!(self, Self::Softened { .. })
    }

    pub fn descriptor(&self) -> PolicyDescriptor {
        match *self {
            Self::Softened { lambda, zeta } => PolicyDescriptor::new("softened")
                .with("lambda", lambda)
                .with("zeta", zeta),
            Self::SoftenedPerfect { lambda } => {
                PolicyDescriptor::new("softened_perfect").with("lambda", lambda)
            }
            Self::DiverseSoftenedPerfect => PolicyDescriptor::new("diverse_softened_perfect"),
            Self::Tweak1 { rho } => PolicyDescriptor::new("tweak1").with("rho", rho),
            Self::Dirichlet { gamma } => PolicyDescriptor::new("dirichlet").with("gamma", gamma),
        }
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.descriptor().fmt(f)
    }
}

/// What a policy may condition on besides the context vector.
pub enum PolicyInput<T> {
    /// Deterministic classifier for the softened family.
    Classifier(Arc<MultinomialLogistic<T>>),
    /// Ground-truth labels indexed by context id.
    Labels(Arc<Vec<usize>>),
    /// Families that ignore the context.
    None,
}

/// Where a softened policy puts its top mass.
#[derive(Clone)]
enum Anchor<T> {
    Classifier(Arc<MultinomialLogistic<T>>),
    Labels(Arc<Vec<usize>>),
}

/// One action gets `lambda(class) + zeta u(x)`, the others share the rest.
#[derive(Clone)]
pub struct SoftenedPolicy<T> {
    k: usize,
    anchor: Anchor<T>,
    /// `lambda` per anchored action.
    lambda: Vec<T>,
    zeta: T,
    noise_seed: u64,
    descriptor: PolicyDescriptor,
}

/// Stream used for the per-context softening noise.
const NOISE_STREAM: u64 = 11;

impl<T: Scalar> SoftenedPolicy<T> {
    fn anchor_action(&self, ctx: Context<'_, T>) -> usize {
        match &self.anchor {
            Anchor::Classifier(c) => c.predict(ctx.x),
            Anchor::Labels(l) => *l
                .get(ctx.id)
                .unwrap_or_else(|| panic!("context id {} has no label", ctx.id)),
        }
    }

    /// The top-action probability at `ctx`.
    pub fn top_mass(&self, ctx: Context<'_, T>) -> T {
        let a = self.anchor_action(ctx);
        let mut p = self.lambda[a];
        if self.zeta > T::zero() {
            let u = context_uniform(self.noise_seed, NOISE_STREAM, ctx.id) - 0.5;
            p += self.zeta * T::lit(u);
        }
        p.max(T::zero()).min(T::one())
    }
}

impl<T: Scalar> StochasticPolicy<T> for SoftenedPolicy<T> {
    fn num_actions(&self) -> usize {
        self.k
    }

    fn probs_into(&self, ctx: Context<'_, T>, out: &mut [T]) {
        let a = self.anchor_action(ctx);
        let top = self.top_mass(ctx);
        let rest = if self.k > 1 {
            (T::one() - top) / T::count(self.k - 1)
        } else {
            T::zero()
        };
        out.iter_mut().for_each(|v| *v = rest);
        out[a] = if self.k > 1 { top } else { T::one() };
    }

    fn descriptor(&self) -> PolicyDescriptor {
        self.descriptor.clone()
    }
}

/// Streams for the draws that stay fixed across repetitions.
pub(crate) const TWEAK1_CLASS_STREAM: u64 = 21;
pub(crate) const DIRICHLET_STREAM: u64 = 22;
pub(crate) const PERMUTATION_STREAM: u64 = 23;

/// Builds a policy over `k` actions.
///
/// `fixed_seed` drives draws that define the policy itself (the Tweak-1
/// class, the Dirichlet vector, the class permutation); `noise_seed` drives
/// the per-context softening noise.
pub fn make_policy<T: Scalar>(
    spec: &PolicySpec,
    k: usize,
    input: PolicyInput<T>,
    fixed_seed: u64,
    noise_seed: u64,
) -> Result<Arc<dyn StochasticPolicy<T>>> {
    spec.validate()?;
    if k < 2 {
        return Err(Error::TooFewActions);
    }
    let descriptor = spec.descriptor();
    let softened = |anchor: Anchor<T>, lambda: Vec<T>, zeta: f64| -> Arc<dyn StochasticPolicy<T>> {
        Arc::new(SoftenedPolicy {
            k,
            anchor,
            lambda,
            zeta: T::lit(zeta),
            noise_seed,
            descriptor: descriptor.clone(),
        })
    };
    let labels = |input: PolicyInput<T>| match input {
        PolicyInput::Labels(l) => Ok(l),
        _ => Err(Error::InvalidConfig(format!("{spec} needs ground-truth labels"))),
    };
    match *spec {
        PolicySpec::Softened { lambda, zeta } => match input {
            PolicyInput::Classifier(c) => {
                if c.k != k {
                    return Err(Error::DimensionMismatch { expected: k, got: c.k });
                }
                Ok(softened(Anchor::Classifier(c), vec![T::lit(lambda); k], zeta))
            }
            _ => Err(Error::InvalidConfig(format!("{spec} needs a trained classifier"))),
        },
        PolicySpec::SoftenedPerfect { lambda } => Ok(softened(
            Anchor::Labels(labels(input)?),
            vec![T::lit(lambda); k],
            0.0,
        )),
        PolicySpec::DiverseSoftenedPerfect => {
            let mut lambda: Vec<T> = (1..=k).map(|i| T::count(i) / T::count(k)).collect();
            lambda.shuffle(&mut stream_rng(fixed_seed, PERMUTATION_STREAM));
            Ok(softened(Anchor::Labels(labels(input)?), lambda, 0.0))
        }
        PolicySpec::Tweak1 { rho } => {
            let chosen = stream_rng(fixed_seed, TWEAK1_CLASS_STREAM).random_range(0..k);
            let mut probs = vec![T::lit((1.0 - rho) / (k - 1) as f64); k];
            probs[chosen] = T::lit(rho);
            Ok(Arc::new(FixedPolicy {
                probs,
                descriptor: descriptor.with("class", chosen as f64),
            }))
        }
        PolicySpec::Dirichlet { gamma } => Ok(Arc::new(FixedPolicy {
            probs: dirichlet_probs(gamma, k, fixed_seed)?,
            descriptor,
        })),
    }
}

/// One `Dirichlet(gamma)` draw via normalized Gamma variates, mixed with the
/// uniform distribution when `gamma = 0.1`.
fn dirichlet_probs<T: Scalar>(gamma: f64, k: usize, seed: u64) -> Result<Vec<T>> {
    let g = Gamma::new(gamma, 1.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = stream_rng(seed, DIRICHLET_STREAM);
    let draws: Vec<f64> = (0..k).map(|_| g.sample(&mut rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut p: Vec<f64> = if total > 0.0 {
        draws.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    if (gamma - 0.1).abs() < 1e-12 {
        p.iter_mut().for_each(|v| *v = 0.95 * *v + 0.05 / k as f64);
    }
    let s: f64 = p.iter().sum();
    Ok(p.into_iter().map(|v| T::lit(v / s)).collect())
}
