//! First principal component by power iteration on the covariance matrix.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_ITERS: usize = 200;
const TOL: f64 = 1e-10;

/// Unit-norm leading eigenvector of the sample covariance of `rows`.
///
/// The sign is fixed so the entry of largest magnitude is positive.
pub fn first_component<T: Scalar>(rows: &Array2<T>) -> Result<Array1<T>> {
    let n = rows.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mean = rows.mean_axis(Axis(0)).ok_or(Error::Empty("contexts"))?;
    let centered = rows - &mean;
    let cov = centered.t().dot(&centered) / T::count(n);
    let d = cov.nrows();
    // A non-symmetric start vector avoids starting orthogonal to the
    // component on axis-aligned data.
    let mut v = Array1::from_iter((0..d).map(|j| T::one() + T::lit(0.1) * T::count(j)));
    v /= v.dot(&v).sqrt();
    for _ in 0..MAX_ITERS {
        let mut next = cov.dot(&v);
        let norm = next.dot(&next).sqrt();
        if !(norm > T::zero()) {
            return Err(Error::DegenerateComponent);
        }
        next /= norm;
        let residual = (&next - &v).mapv(|e| e * e).sum().sqrt();
        v = next;
        if residual.as_f64() < TOL {
            break;
        }
    }
    let lead = v
        .iter()
        .copied()
        .fold(T::zero(), |best, e| if e.abs() > best.abs() { e } else { best });
    if lead < T::zero() {
        v.mapv_inplace(|e| -e);
    }
    Ok(v)
}

/// Scores `rows . component` (uncentered; only differences matter).
pub fn project<T: Scalar>(rows: &Array2<T>, component: &Array1<T>) -> Vec<T> {
    rows.dot(component).to_vec()
}
