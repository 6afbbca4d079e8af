//! Joint context/action feature map `phi(x, a)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// `[x; one_hot(a); 1]`
    #[default]
    Concat,
    /// `[x; 1]` copied into block `a` of `k` blocks, zeros elsewhere.
    Interaction,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(Self::Concat),
            "interaction" => Ok(Self::Interaction),
            other => Err(Error::InvalidConfig(format!("unknown feature mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub mode: FeatureMode,
    pub d: usize,
    pub k: usize,
}

impl FeatureMap {
    pub fn new(mode: FeatureMode, d: usize, k: usize) -> Self {
        Self { mode, d, k }
    }

    pub fn output_dim(&self) -> usize {
        match self.mode {
            FeatureMode::Concat => self.d + self.k + 1,
            FeatureMode::Interaction => (self.d + 1) * self.k,
        }
    }

    /// Writes `phi(x, a)` into `out`, which must have length `output_dim()`.
    pub fn write<T: Scalar>(&self, x: &[T], a: usize, out: &mut [T]) -> Result<()> {
        if a >= self.k {
            return Err(Error::ActionOutOfRange { action: a, k: self.k });
        }
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        debug_assert_eq!(out.len(), self.output_dim());
        out.iter_mut().for_each(|v| *v = T::zero());
        match self.mode {
            FeatureMode::Concat => {
                out[..self.d].copy_from_slice(x);
                out[self.d + a] = T::one();
                out[self.d + self.k] = T::one();
            }
            FeatureMode::Interaction => {
                let start = a * (self.d + 1);
                out[start..start + self.d].copy_from_slice(x);
                out[start + self.d] = T::one();
            }
        }
        Ok(())
    }

    pub fn map<T: Scalar>(&self, x: &[T], a: usize) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.output_dim()];
        self.write(x, a, &mut out)?;
        Ok(out)
    }

    /// `theta . phi(x, a)` without materializing `phi`.
    pub fn dot<T: Scalar>(&self, theta: &[T], x: &[T], a: usize) -> T {
        debug_assert_eq!(theta.len(), self.output_dim());
        match self.mode {
            FeatureMode::Concat => {
                crate::scalar::dot(&theta[..self.d], x) + theta[self.d + a] + theta[self.d + self.k]
            }
            FeatureMode::Interaction => {
                let start = a * (self.d + 1);
                crate::scalar::dot(&theta[start..start + self.d], x) + theta[start + self.d]
            }
        }
    }

    /// `acc += scale * phi(x, a)` without materializing `phi`.
    pub fn axpy<T: Scalar>(&self, scale: T, x: &[T], a: usize, acc: &mut [T]) {
        match self.mode {
            FeatureMode::Concat => {
                for (g, &v) in acc[..self.d].iter_mut().zip(x) {
                    *g += scale * v;
                }
                acc[self.d + a] += scale;
                acc[self.d + self.k] += scale;
            }
            FeatureMode::Interaction => {
                let start = a * (self.d + 1);
                for (g, &v) in acc[start..start + self.d].iter_mut().zip(x) {
                    *g += scale * v;
                }
                acc[start + self.d] += scale;
            }
        }
    }
}
