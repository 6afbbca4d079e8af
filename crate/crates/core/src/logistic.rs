//! Linear logistic classifiers trained with the shared SGD loop.
//!
//! Both models use the context plus a constant bias, `[x; 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{self, TrainConfig};
use crate::scalar::{dot, Scalar};

/// Default optimizer settings for the classifiers.
pub fn classifier_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        batch_size: 32,
        epochs: 200,
        lr_decay: true,
        l2_reg: 0.0,
        seed,
    }
}

/// Softmax regression over `k` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialLogistic<T> {
    pub k: usize,
    pub d: usize,
    /// Row-major `k x (d + 1)`; the last column is the bias.
    pub weights: Vec<T>,
}

impl<T: Scalar> MultinomialLogistic<T> {
    fn logits_into(w: &[T], k: usize, d: usize, x: &[T], out: &mut [T]) {
        for c in 0..k {
            let row = &w[c * (d + 1)..(c + 1) * (d + 1)];
            out[c] = dot(&row[..d], x) + row[d];
        }
    }

    fn softmax_in_place(v: &mut [T]) {
        let m = v.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for z in v.iter_mut() {
            *z = (*z - m).exp();
            s += *z;
        }
        v.iter_mut().for_each(|z| *z /= s);
    }

    pub fn probs_into(&self, x: &[T], out: &mut [T]) {
        Self::logits_into(&self.weights, self.k, self.d, x, out);
        Self::softmax_in_place(out);
    }

    pub fn probs(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.k];
        self.probs_into(x, &mut out);
        out
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[T]) -> usize {
        let mut logits = vec![T::zero(); self.k];
        Self::logits_into(&self.weights, self.k, self.d, x, &mut logits);
        let mut best = 0;
        for c in 1..self.k {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        best
    }

    /// Cross-entropy minimization on `(rows[i], labels[i])`.
    pub fn fit(rows: &[&[T]], labels: &[usize], k: usize, cfg: &TrainConfig) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidConfig("rows and labels differ in length".into()));
        }
        let d = rows.first().map(|r| r.len()).ok_or(Error::Empty("training set"))?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::ActionOutOfRange { action: bad, k });
        }
        let mut w = vec![T::zero(); k * (d + 1)];
        let mut p = vec![T::zero(); k];
        let l2 = T::lit(cfg.l2_reg);
        let two = T::lit(2.0);
        optim::minimize(rows.len(), &mut w, cfg, |batch, params, g| {
            g.iter_mut().for_each(|v| *v = T::zero());
            let inv = T::count(batch.len()).recip();
            for &i in batch {
                let x = rows[i];
                Self::logits_into(params, k, d, x, &mut p);
                Self::softmax_in_place(&mut p);
                p[labels[i]] -= T::one();
                for c in 0..k {
                    let coef = p[c] * inv;
                    let row = &mut g[c * (d + 1)..(c + 1) * (d + 1)];
                    for (gj, &xj) in row[..d].iter_mut().zip(x) {
                        *gj += coef * xj;
                    }
                    row[d] += coef;
                }
            }
            if l2 > T::zero() {
                for (gj, &pj) in g.iter_mut().zip(params) {
                    *gj += two * l2 * pj;
                }
            }
        })?;
        Ok(Self { k, d, weights: w })
    }
}

/// Binary logistic regression `p(y = 1 | x) = sigmoid(w . x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogistic<T> {
    pub d: usize,
    pub weights: Vec<T>,
}

impl<T: Scalar> BinaryLogistic<T> {
    fn logit(w: &[T], d: usize, x: &[T]) -> T {
        dot(&w[..d], x) + w[d]
    }

    fn sigmoid(z: T) -> T {
        if z >= T::zero() {
            (T::one() + (-z).exp()).recip()
        } else {
            let e = z.exp();
            e / (T::one() + e)
        }
    }

    pub fn prob(&self, x: &[T]) -> T {
        Self::sigmoid(Self::logit(&self.weights, self.d, x))
    }

    pub fn fit(rows: &[&[T]], labels: &[bool], cfg: &TrainConfig) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidConfig("rows and labels differ in length".into()));
        }
        let d = rows.first().map(|r| r.len()).ok_or(Error::Empty("training set"))?;
        let mut w = vec![T::zero(); d + 1];
        let l2 = T::lit(cfg.l2_reg);
        let two = T::lit(2.0);
        optim::minimize(rows.len(), &mut w, cfg, |batch, params, g| {
            g.iter_mut().for_each(|v| *v = T::zero());
            let inv = T::count(batch.len()).recip();
            for &i in batch {
                let x = rows[i];
                let y = if labels[i] { T::one() } else { T::zero() };
                let coef = (Self::sigmoid(Self::logit(params, d, x)) - y) * inv;
                for (gj, &xj) in g[..d].iter_mut().zip(x) {
                    *gj += coef * xj;
                }
                g[d] += coef;
            }
            if l2 > T::zero() {
                for (gj, &pj) in g.iter_mut().zip(params) {
                    *gj += two * l2 * pj;
                }
            }
        })?;
        Ok(Self { d, weights: w })
    }
}
