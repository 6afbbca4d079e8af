use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumericFeature {
        column: String,
        row: usize,
        value: String,
    },

    #[error("dataset has a single class; at least two are required")]
    SingleClass,

    #[error("action {action} out of range for {k} actions")]
    ActionOutOfRange { action: usize, k: usize },

    #[error("context has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite gradient at epoch {epoch}, batch {batch}")]
    NonFiniteGradient { epoch: usize, batch: usize },

    #[error("every importance weight is zero; the normalizer is undefined")]
    ZeroWeightSum,

    #[error("fewer than two distinct actions observed")]
    TooFewActions,

    #[error("estimator {0} requires a general covariate shift ratio model")]
    MissingGcsRatio(String),

    #[error("estimator {0} requires a reward model that was not supplied")]
    MissingRewardModel(String),

    #[error("degenerate principal component: all scores are equal")]
    DegenerateComponent,

    #[error("context {0} is not part of the generated pool")]
    UnknownContext(usize),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("requested {requested} logging samples, cap is {cap}")]
    SampleCapExceeded { requested: usize, cap: usize },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
