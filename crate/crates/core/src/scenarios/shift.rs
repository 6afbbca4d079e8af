//! Covariate-shift samplers: per-row sampling weights for the source
//! context distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftSpec {
    #[default]
    None,
    /// Gaussian on the first principal component, centred below the data.
    GaussianPca { a: f64, b: f64 },
    /// Weight `omega` on one seeded class, 1 elsewhere.
    Tweak1Covariate { omega: f64 },
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::None => Ok(()),
            Self::GaussianPca { a, b } => {
                if a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "gaussian shift needs a > 0 and b > 0, got ({a}, {b})"
                    )))
                }
            }
            Self::Tweak1Covariate { omega } => {
                if omega >= 1.0 && omega.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!("omega must be >= 1, got {omega}")))
                }
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }
}

impl std::fmt::Display for ShiftSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::GaussianPca { a, b } => write!(f, "gaussian_pca(a={a};b={b})"),
            Self::Tweak1Covariate { omega } => write!(f, "tweak1_covariate(omega={omega})"),
        }
    }
}

/// `N(m, s^2)` on component scores with `m = min(c) + (min(c) - mean(c)) / a`
/// and `s = std(c) / b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianShift<T> {
    pub m: T,
    pub s: T,
}

impl<T: Scalar> GaussianShift<T> {
    pub fn fit(scores: &[T], a: f64, b: f64) -> Result<Self> {
        ShiftSpec::GaussianPca { a, b }.validate()?;
        if scores.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: scores.len(),
            });
        }
        let mu = mean(scores.iter().copied()).expect("nonempty");
        let var = mean(scores.iter().map(|&c| (c - mu) * (c - mu))).expect("nonempty");
        let std = var.sqrt();
        if !(std > T::epsilon() * (T::one() + mu.abs())) {
            return Err(Error::DegenerateComponent);
        }
        let min = scores.iter().copied().fold(T::infinity(), T::min);
        Ok(Self {
            m: min + (min - mu) / T::lit(a),
            s: std / T::lit(b),
        })
    }

    /// Densities at `scores`, normalized to sum to one.
    ///
    /// Computed in log space relative to the largest log density so points
    /// far in the tail do not all underflow to zero.
    pub fn weights(&self, scores: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        let logs: Vec<T> = scores
            .iter()
            .map(|&c| {
                let z = (c - self.m) / self.s;
                -half * z * z
            })
            .collect();
        let top = logs.iter().copied().fold(T::neg_infinity(), T::max);
        let un: Vec<T> = logs.iter().map(|&l| (l - top).exp()).collect();
        let total: T = un.iter().copied().sum();
        un.into_iter().map(|v| v / total).collect()
    }
}

/// Gaussian-shift weights for points with the given component scores.
pub fn gaussian_shift_weights<T: Scalar>(scores: &[T], a: f64, b: f64) -> Result<Vec<T>> {
    Ok(GaussianShift::fit(scores, a, b)?.weights(scores))
}

/// `omega` for rows of `chosen_class`, 1 otherwise, normalized.
pub fn tweak1_shift_weights<T: Scalar>(labels: &[usize], omega: f64, chosen_class: usize) -> Vec<T> {
    let raw: Vec<T> = labels
        .iter()
        .map(|&l| if l == chosen_class { T::lit(omega) } else { T::one() })
        .collect();
    let total: T = raw.iter().copied().sum();
    raw.into_iter().map(|v| v / total).collect()
}
