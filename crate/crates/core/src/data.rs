//! Logged bandit data, standardization, classification CSV ingestion and
//! the stochastic policy abstraction shared by every other module.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A context as seen by policies and models.
///
/// `id` identifies the row in the pool the context was drawn from. Policies
/// that depend on per-context randomness or ground-truth labels key on it;
/// everything else only reads `x`.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a, T> {
    pub id: usize,
    pub x: &'a [T],
}

impl<'a, T> Context<'a, T> {
    pub fn new(id: usize, x: &'a [T]) -> Self {
        Self { id, x }
    }
}

/// One logged interaction `(x, a, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedSample<T> {
    pub context_id: usize,
    pub context: Vec<T>,
    pub action: usize,
    pub reward: T,
    pub logging_propensity: Option<T>,
}

impl<T: Scalar> LoggedSample<T> {
    pub fn ctx(&self) -> Context<'_, T> {
        Context::new(self.context_id, &self.context)
    }
}

/// Per-feature affine standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Fits population mean and standard deviation per column. Zero-variance
    /// columns get scale 1 and a warning.
    pub fn fit<'a, I>(rows: I, d: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        let rows: Vec<&[T]> = rows.into_iter().collect();
        if rows.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: rows.len(),
            });
        }
        let n = T::count(rows.len());
        let mut mean = vec![T::zero(); d];
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            for (m, &v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for row in &rows {
            for j in 0..d {
                let c = row[j] - mean[j];
                var[j] += c * c;
            }
        }
        let scale = var
            .into_iter()
            .enumerate()
            .map(|(j, v)| {
                let s = (v / n).sqrt();
                if s > T::epsilon().sqrt() * (T::one() + mean[j].abs()) {
                    s
                } else {
                    log::warn!("feature {j} has zero variance; scale clamped to 1");
                    T::one()
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![T::zero(); d],
            scale: vec![T::one(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_into(&self, x: &[T], out: &mut [T]) {
        for j in 0..self.mean.len() {
            out[j] = (x[j] - self.mean[j]) / self.scale[j];
        }
    }

    pub fn transform(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        self.transform_into(x, &mut out);
        out
    }

    pub fn transform_matrix(&self, m: &Array2<T>) -> Array2<T> {
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }
}

/// The logged dataset `S`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BanditDataset<T> {
    samples: Vec<LoggedSample<T>>,
    k: usize,
    d: usize,
    standardization: Option<Standardizer<T>>,
}

impl<T: Scalar> BanditDataset<T> {
    pub fn new(samples: Vec<LoggedSample<T>>, k: usize, d: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("action count must be positive".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.context.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.context.len(),
                });
            }
            if s.action >= k {
                return Err(Error::ActionOutOfRange { action: s.action, k });
            }
            if !s.reward.is_finite() {
                return Err(Error::InvalidSample {
                    index: i,
                    reason: "reward is not finite".into(),
                });
            }
            if let Some(p) = s.logging_propensity {
                if !(p > T::zero() && p <= T::one()) {
                    return Err(Error::InvalidSample {
                        index: i,
                        reason: format!("propensity {p} outside (0, 1]"),
                    });
                }
            }
        }
        Ok(Self {
            samples,
            k,
            d,
            standardization: None,
        })
    }

    pub fn samples(&self) -> &[LoggedSample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn standardization(&self) -> Option<&Standardizer<T>> {
        self.standardization.as_ref()
    }

    /// Standardizes contexts with statistics fitted on this dataset. The
    /// fitted parameters are kept so target contexts can be mapped the same
    /// way.
    pub fn standardize(&self) -> Result<Self> {
        let st = Standardizer::fit(self.samples.iter().map(|s| s.context.as_slice()), self.d)?;
        Ok(self.apply_standardizer(st))
    }

    pub fn apply_standardizer(&self, st: Standardizer<T>) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| LoggedSample {
                context: st.transform(&s.context),
                ..s.clone()
            })
            .collect();
        Self {
            samples,
            k: self.k,
            d: self.d,
            standardization: Some(st),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            k: self.k,
            d: self.d,
            standardization: self.standardization.clone(),
        }
    }

    pub fn distinct_actions(&self) -> usize {
        let mut seen = vec![false; self.k];
        self.samples.iter().for_each(|s| seen[s.action] = true);
        seen.into_iter().filter(|&b| b).count()
    }
}

/// Reporting record for a policy: family name and numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDescriptor {
    pub family: String,
    pub params: BTreeMap<String, f64>,
}

impl PolicyDescriptor {
    pub fn new(family: impl Into<String>) -> Self {
        Self {
            family: family.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

impl fmt::Display for PolicyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        if !self.params.is_empty() {
            let parts: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", parts.join(";"))?;
        }
        Ok(())
    }
}

/// A stochastic policy `a ~ p(.|x)` over `k` actions.
///
/// Implementations must return a distribution: nonnegative entries summing
/// to one within 1e-9.
pub trait StochasticPolicy<T: Scalar>: Send + Sync {
    fn num_actions(&self) -> usize;

    fn probs_into(&self, ctx: Context<'_, T>, out: &mut [T]);

    fn probs(&self, ctx: Context<'_, T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.num_actions()];
        self.probs_into(ctx, &mut out);
        out
    }

    fn prob(&self, ctx: Context<'_, T>, action: usize) -> T {
        self.probs(ctx)[action]
    }

    fn descriptor(&self) -> PolicyDescriptor;
}

/// A context-independent distribution over actions.
#[derive(Debug, Clone)]
pub struct FixedPolicy<T> {
    pub probs: Vec<T>,
    pub descriptor: PolicyDescriptor,
}

impl<T: Scalar> FixedPolicy<T> {
    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![T::one() / T::count(k); k],
            descriptor: PolicyDescriptor::new("uniform"),
        }
    }
}

impl<T: Scalar> StochasticPolicy<T> for FixedPolicy<T> {
    fn num_actions(&self) -> usize {
        self.probs.len()
    }

    fn probs_into(&self, _ctx: Context<'_, T>, out: &mut [T]) {
        out.copy_from_slice(&self.probs);
    }

    fn prob(&self, _ctx: Context<'_, T>, action: usize) -> T {
        self.probs[action]
    }

    fn descriptor(&self) -> PolicyDescriptor {
        self.descriptor.clone()
    }
}

/// A labeled classification table: the raw material for bandit conversion.
#[derive(Debug, Clone)]
pub struct ClassificationData<T> {
    pub contexts: Array2<T>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl<T: Scalar> ClassificationData<T> {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.contexts.ncols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.contexts
            .row(i)
            .to_slice()
            .expect("contexts are stored in standard layout")
    }
}

fn label_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Reads a headered, comma separated classification table. Every column but
/// `label_column` must be numeric; labels are re-indexed densely to `[0, k)`
/// in sorted label order (numeric when all labels parse as numbers).
pub fn load_classification_csv<T: Scalar>(
    path: impl AsRef<Path>,
    label_column: &str,
) -> Result<ClassificationData<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let d = feature_names.len();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(field.trim().to_string());
                continue;
            }
            let v = field
                .trim()
                .parse::<f64>()
                .ok()
                .and_then(T::from_f64)
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericFeature {
                    column: header[j].clone(),
                    row: row + 1,
                    value: field.to_string(),
                })?;
            values.push(v);
        }
    }
    let n = raw_labels.len();
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }

    let mut class_names: Vec<String> = raw_labels.clone();
    class_names.sort_by(|a, b| label_order(a, b));
    class_names.dedup();
    if class_names.len() < 2 {
        return Err(Error::SingleClass);
    }
    let index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let labels = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    let contexts = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::InvalidConfig(format!("ragged csv: {e}")))?;

    Ok(ClassificationData {
        contexts,
        labels,
        k: class_names.len(),
        class_names,
        feature_names,
    })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn sample(x: Vec<f64>, a: usize, r: f64) -> LoggedSample<f64> {
        LoggedSample {
            context_id: 0,
            context: x,
            action: a,
            reward: r,
            logging_propensity: None,
        }
    }

    #[test]
    fn two_row_labels_reindexed() {
        let f = write_csv("f1,label\n0.5,A\n1.5,B\n");
        let data = load_classification_csv::<f64>(f.path(), "label").unwrap();
        assert_eq!(data.k, 2);
        assert_eq!(data.labels, vec![0, 1]);
        assert_eq!(data.d(), 1);
    }

    #[test]
    fn label_column_can_sit_anywhere() {
        let f = write_csv("y,a,b\n3,1,2\n1,3,4\n3,5,6\n");
        let data = load_classification_csv::<f64>(f.path(), "y").unwrap();
        assert_eq!(data.labels, vec![1, 0, 1]);
        assert_eq!(data.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_errors() {
        let missing = load_classification_csv::<f64>("/nonexistent/file.csv", "y");
        assert!(matches!(missing, Err(Error::Io { .. })));

        let f = write_csv("a,y\nfoo,1\n2,2\n");
        let bad = load_classification_csv::<f64>(f.path(), "y");
        assert!(matches!(bad, Err(Error::NonNumericFeature { row: 1, .. })));

        let f = write_csv("a,y\n1,c\n2,c\n");
        assert!(matches!(
            load_classification_csv::<f64>(f.path(), "y"),
            Err(Error::SingleClass)
        ));

        let f = write_csv("a,y\n1,c\n2,d\n");
        assert!(matches!(
            load_classification_csv::<f64>(f.path(), "label"),
            Err(Error::MissingLabelColumn(_))
        ));
    }

    #[test]
    fn two_point_standardization() {
        let ds = BanditDataset::new(vec![sample(vec![1.0], 0, 1.0), sample(vec![3.0], 0, 0.0)], 1, 1)
            .unwrap()
            .standardize()
            .unwrap();
        let st = ds.standardization().unwrap();
        assert_eq!(st.mean, vec![2.0]);
        assert_eq!(st.scale, vec![1.0]);
        assert_eq!(ds.samples()[0].context, vec![-1.0]);
        assert_eq!(ds.samples()[1].context, vec![1.0]);
    }

    #[test]
    fn constant_column_clamped() {
        let ds = BanditDataset::new(vec![sample(vec![5.0], 0, 1.0), sample(vec![5.0], 0, 0.0)], 1, 1)
            .unwrap()
            .standardize()
            .unwrap();
        assert_eq!(ds.standardization().unwrap().scale, vec![1.0]);
        assert_eq!(ds.samples()[0].context, vec![0.0]);
        assert_eq!(ds.samples()[1].context, vec![0.0]);
    }

    #[test]
    fn standardization_is_idempotent() {
        let raw = BanditDataset::new(
            (0..17)
                .map(|i| sample(vec![(i as f64).sin() * 3.0 + 1.0, i as f64 * 0.25], i % 3, 0.5))
                .collect(),
            3,
            2,
        )
        .unwrap();
        let once = raw.standardize().unwrap();
        let twice = once.standardize().unwrap();
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            for (u, v) in a.context.iter().zip(&b.context) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardization_needs_two_rows() {
        let ds = BanditDataset::new(vec![sample(vec![1.0], 0, 1.0)], 1, 1).unwrap();
        assert!(matches!(ds.standardize(), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn dataset_invariants() {
        assert!(matches!(
            BanditDataset::new(vec![sample(vec![1.0], 2, 1.0)], 2, 1),
            Err(Error::ActionOutOfRange { action: 2, k: 2 })
        ));
        assert!(BanditDataset::new(vec![sample(vec![1.0], 0, f64::NAN)], 2, 1).is_err());
        let mut s = sample(vec![1.0], 0, 1.0);
        s.logging_propensity = Some(0.0);
        assert!(BanditDataset::new(vec![s], 2, 1).is_err());
    }
}
