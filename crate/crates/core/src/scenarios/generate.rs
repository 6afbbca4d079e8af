use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policies::{make_policy, PolicyInput, PolicySpec};
use super::shift::{tweak1_shift_weights, GaussianShift, ShiftSpec};
use super::{pca, stream_rng};
use crate::data::{
    BanditDataset, ClassificationData, Context, LoggedSample, Standardizer, StochasticPolicy,
};
use crate::error::{Error, Result};
use crate::logistic::{classifier_config, MultinomialLogistic};
use crate::ratio::{KnownContextRatio, RatioModel};
use crate::scalar::Scalar;

// Streams of the per-repetition seed.
const SPLIT: u64 = 1;
const PSI_SUBSET: u64 = 2;
const TRAIN_SAMPLE: u64 = 3;
const EVAL_SAMPLE: u64 = 4;
const VALUE_SAMPLE: u64 = 5;
const LOGGING_NOISE: u64 = 6;
const TARGET_NOISE: u64 = 7;
const PSI_FIT: u64 = 8;
// Streams of the fixed seed.
const SHIFT_CLASS: u64 = 24;

/// Which parts of the density ratio the estimators may treat as known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Knowledge {
    pub propensity_known: bool,
    pub context_ratio_known: bool,
}

impl fmt::Display for Knowledge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word = |b: bool| if b { "known" } else { "fitted" };
        write!(
            f,
            "propensity={};context_ratio={}",
            word(self.propensity_known),
            word(self.context_ratio_known)
        )
    }
}

/// One cell of the benchmark grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub dataset: String,
    pub logging: PolicySpec,
    pub target: PolicySpec,
    #[serde(default)]
    pub shift: ShiftSpec,
    #[serde(default)]
    pub knowledge: Knowledge,
    pub repetitions: usize,
    /// Fixes the policy draws that are shared by all repetitions; repetition
    /// `i` uses `seed ^ i` for everything else.
    pub seed: u64,
}

impl Condition {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        self.logging.validate()?;
        self.target.validate()?;
        self.shift.validate()
    }

    pub fn rep_seed(&self, rep: usize) -> u64 {
        self.seed ^ rep as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    /// `mean_x pi(label(x) | x)` over the test split.
    #[default]
    Exact,
    /// One sampled action per test context.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOptions {
    pub train_fraction: f64,
    /// Share of the training split used to fit a softened logging policy's
    /// classifier; a softened target's classifier uses all of it.
    pub logging_classifier_fraction: f64,
    pub value_mode: ValueMode,
    /// Defaults to the training split size.
    pub train_logging_size: Option<usize>,
    /// Defaults to the test split size.
    pub eval_logging_size: Option<usize>,
    pub sample_cap: usize,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            logging_classifier_fraction: 0.1,
            value_mode: ValueMode::Exact,
            train_logging_size: None,
            eval_logging_size: None,
            sample_cap: 1_000_000,
        }
    }
}

/// Everything one repetition needs.
///
/// Context ids are row indices into `contexts`, which holds the whole
/// dataset standardized with training-split statistics.
pub struct GeneratedScenario<T: Scalar> {
    pub k: usize,
    pub contexts: Array2<T>,
    pub labels: Arc<Vec<usize>>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub logging: Arc<dyn StochasticPolicy<T>>,
    pub target: Arc<dyn StochasticPolicy<T>>,
    pub shift: ShiftSpec,
    /// `P_s(x) / P_t(x)` per context id, relative to the context's own split.
    pub context_ratio: Vec<T>,
    pub train_logging: BanditDataset<T>,
    pub eval_logging: BanditDataset<T>,
    pub true_value: T,
}

impl<T: Scalar> GeneratedScenario<T> {
    pub fn context(&self, id: usize) -> Context<'_, T> {
        Context::new(
            id,
            self.contexts
                .row(id)
                .to_slice()
                .expect("contexts are stored in standard layout"),
        )
    }

    /// The target contexts: the whole test split.
    pub fn target_contexts(&self) -> Vec<Context<'_, T>> {
        self.test_idx.iter().map(|&i| self.context(i)).collect()
    }

    pub fn known_context_ratio(&self) -> KnownContextRatio<T> {
        KnownContextRatio {
            values: self.context_ratio.iter().copied().enumerate().collect(),
        }
    }

    /// Ratio model built from the construction-time ground truth.
    pub fn known_ratio_model(&self, covariate_shift: bool) -> RatioModel<T> {
        if covariate_shift {
            RatioModel::covariate_shift(
                self.logging.clone(),
                Arc::new(self.known_context_ratio()),
                false,
            )
        } else {
            RatioModel::policy_shift(self.logging.clone(), false)
        }
    }

    /// `P_s(x)/P_t(x) * beta(a|x)/pi(a|x)` for a context of the pool.
    pub fn true_ratio(&self, id: usize, a: usize) -> Result<T> {
        if id >= self.contexts.nrows() {
            return Err(Error::UnknownContext(id));
        }
        if a >= self.k {
            return Err(Error::ActionOutOfRange { action: a, k: self.k });
        }
        self.known_ratio_model(true)
            .ratio_w(self.context(id), a, self.target.as_ref())
    }
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last
    // action with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
fn draw_logging<T: Scalar, R: Rng>(
    pool: &Array2<T>,
    labels: &[usize],
    ids: &[usize],
    weights: &[T],
    n: usize,
    beta: &dyn StochasticPolicy<T>,
    k: usize,
    rng: &mut R,
) -> Result<BanditDataset<T>> {
    let w: Vec<f64> = weights.iter().map(|v| v.as_f64()).collect();
    let pick = WeightedIndex::new(&w)
        .map_err(|e| Error::InvalidConfig(format!("context sampling weights: {e}")))?;
    let mut probs = vec![T::zero(); k];
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let id = ids[pick.sample(rng)];
        let x = pool.row(id).to_vec();
        beta.probs_into(Context::new(id, &x), &mut probs);
        let pf: Vec<f64> = probs.iter().map(|v| v.as_f64()).collect();
        let a = sample_index(&pf, rng);
        samples.push(LoggedSample {
            context_id: id,
            context: x,
            action: a,
            reward: if a == labels[id] { T::one() } else { T::zero() },
            logging_propensity: Some(probs[a]),
        });
    }
    BanditDataset::new(samples, k, pool.ncols())
}

fn fit_classifier<T: Scalar>(
    pool: &Array2<T>,
    labels: &[usize],
    ids: &[usize],
    k: usize,
    seed: u64,
) -> Result<Arc<MultinomialLogistic<T>>> {
    let rows: Vec<&[T]> = ids
        .iter()
        .map(|&i| pool.row(i).to_slice().expect("standard layout"))
        .collect();
    let y: Vec<usize> = ids.iter().map(|&i| labels[i]).collect();
    Ok(Arc::new(MultinomialLogistic::fit(&rows, &y, k, &classifier_config(seed))?))
}

/// Source sampling weights over `ids` (normalized) and the per-point
/// context ratio against the uniform target over the same ids.
fn split_weights<T: Scalar>(
    shift: &ShiftSpec,
    ids: &[usize],
    labels: &[usize],
    scores: Option<(&[T], &GaussianShift<T>)>,
    shift_class: usize,
) -> Vec<T> {
    match *shift {
        ShiftSpec::None => vec![T::count(ids.len()).recip(); ids.len()],
        ShiftSpec::GaussianPca { .. } => {
            let (all, g) = scores.expect("scores computed for gaussian shift");
            let c: Vec<T> = ids.iter().map(|&i| all[i]).collect();
            g.weights(&c)
        }
        ShiftSpec::Tweak1Covariate { omega } => {
            let l: Vec<usize> = ids.iter().map(|&i| labels[i]).collect();
            tweak1_shift_weights(&l, omega, shift_class)
        }
    }
}

/// Runs the generation protocol for repetition `rep` of `cond`.
///
/// 1. seeded train/test split; the pool is standardized with training-split
///    statistics;
/// 2. logging and target policies and source context weights;
/// 3. the target value on the test split;
/// 4. the training logging data, drawn from the training split;
/// 5. (left to callers: model fitting);
/// 6. the evaluation logging data, drawn from the test split the same way.
pub fn generate<T: Scalar>(
    cond: &Condition,
    data: &ClassificationData<T>,
    rep: usize,
    opts: &ScenarioOptions,
) -> Result<GeneratedScenario<T>> {
    cond.validate()?;
    let n = data.n();
    let k = data.k;
    let rep_seed = cond.rep_seed(rep);

    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut stream_rng(rep_seed, SPLIT));
    let n_train = (opts.train_fraction * n as f64).round() as usize;
    if n_train < 2 || n_train >= n {
        return Err(Error::Empty("train or test split"));
    }
    let mut test_idx = ids.split_off(n_train);
    let mut train_idx = ids;
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let st = Standardizer::fit(train_idx.iter().map(|&i| data.row(i)), data.d())?;
    let contexts = st.transform_matrix(&data.contexts);
    let labels = Arc::new(data.labels.clone());

    let policy = |spec: &PolicySpec, logging: bool| -> Result<Arc<dyn StochasticPolicy<T>>> {
        let input = if spec.needs_classifier() {
            let mut fit_ids = train_idx.clone();
            if logging {
                fit_ids.shuffle(&mut stream_rng(rep_seed, PSI_SUBSET));
                let m = ((opts.logging_classifier_fraction * fit_ids.len() as f64).round() as usize)
                    .clamp(1, fit_ids.len());
                fit_ids.truncate(m);
                fit_ids.sort_unstable();
            }
            let seed = stream_rng(rep_seed, PSI_FIT).random::<u64>() ^ u64::from(logging);
            PolicyInput::Classifier(fit_classifier(&contexts, &labels, &fit_ids, k, seed)?)
        } else {
            PolicyInput::Labels(labels.clone())
        };
        let noise = stream_rng(rep_seed, if logging { LOGGING_NOISE } else { TARGET_NOISE })
            .random::<u64>();
        make_policy(spec, k, input, cond.seed, noise)
    };
    let logging = policy(&cond.logging, true)?;
    let target = policy(&cond.target, false)?;

    let shift_class = stream_rng(cond.seed, SHIFT_CLASS).random_range(0..k);
    let gaussian = match cond.shift {
        ShiftSpec::GaussianPca { a, b } => {
            let comp = pca::first_component(&contexts)?;
            let scores = pca::project(&contexts, &comp);
            let g = GaussianShift::fit(&scores, a, b)?;
            Some((scores, g))
        }
        _ => None,
    };
    let gref = gaussian.as_ref().map(|(s, g)| (s.as_slice(), g));
    let w_train = split_weights(&cond.shift, &train_idx, &labels, gref, shift_class);
    let w_test = split_weights(&cond.shift, &test_idx, &labels, gref, shift_class);
    let mut context_ratio = vec![T::zero(); n];
    for (ids, w) in [(&train_idx, &w_train), (&test_idx, &w_test)] {
        let m = T::count(ids.len());
        for (&i, &wi) in ids.iter().zip(w.iter()) {
            context_ratio[i] = wi * m;
        }
    }

    let true_value = match opts.value_mode {
        ValueMode::Exact => {
            let total: T = test_idx
                .iter()
                .map(|&i| target.prob(Context::new(i, contexts.row(i).to_slice().unwrap()), labels[i]))
                .sum();
            total / T::count(test_idx.len())
        }
        ValueMode::Sampled => {
            let mut rng = stream_rng(rep_seed, VALUE_SAMPLE);
            let hits = test_idx
                .iter()
                .filter(|&&i| {
                    let p = target.probs(Context::new(i, contexts.row(i).to_slice().unwrap()));
                    let pf: Vec<f64> = p.iter().map(|v| v.as_f64()).collect();
                    sample_index(&pf, &mut rng) == labels[i]
                })
                .count();
            T::count(hits) / T::count(test_idx.len())
        }
    };

    let n_tr = opts.train_logging_size.unwrap_or(train_idx.len());
    let n_ev = opts.eval_logging_size.unwrap_or(test_idx.len());
    for requested in [n_tr, n_ev] {
        if requested > opts.sample_cap {
            return Err(Error::SampleCapExceeded {
                requested,
                cap: opts.sample_cap,
            });
        }
        if requested == 0 {
            return Err(Error::Empty("logging sample"));
        }
    }
    let train_logging = draw_logging(
        &contexts,
        &labels,
        &train_idx,
        &w_train,
        n_tr,
        logging.as_ref(),
        k,
        &mut stream_rng(rep_seed, TRAIN_SAMPLE),
    )?;
    let eval_logging = draw_logging(
        &contexts,
        &labels,
        &test_idx,
        &w_test,
        n_ev,
        logging.as_ref(),
        k,
        &mut stream_rng(rep_seed, EVAL_SAMPLE),
    )?;

    Ok(GeneratedScenario {
        k,
        contexts,
        labels,
        train_idx,
        test_idx,
        logging,
        target,
        shift: cond.shift,
        context_ratio,
        train_logging,
        eval_logging,
        true_value,
    })
}
