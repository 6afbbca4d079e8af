//! Off-policy evaluation for contextual bandits that stays reliable under
//! policy shift and general covariate shift.
//!
//! The crate provides a distributionally robust reward model, the direct,
//! importance-weighted and doubly robust estimator families built on it,
//! density-ratio models, and a classification-to-bandit scenario generator.

// `!(x > 0)` is used on purpose so NaN takes the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimators;
pub mod features;
pub mod gradcheck;
pub mod linear;
pub mod logistic;
pub mod optim;
pub mod ratio;
pub mod robust;
pub mod scenarios;
pub mod scalar;

pub use data::{
    load_classification_csv, BanditDataset, ClassificationData, Context, FixedPolicy, LoggedSample,
    PolicyDescriptor, Standardizer, StochasticPolicy,
};
pub use error::{Error, Result};
pub use estimators::{build_suite, EstimatorName, PolicyValueEstimate, RewardFn, SuiteModels};
pub use features::{FeatureMap, FeatureMode};
pub use linear::LinearRewardModel;
pub use optim::{GridSearch, TrainConfig};
pub use ratio::{ContextRatio, ContextRatioModel, PropensityModel, RatioKind, RatioModel};
pub use robust::{BaseDistribution, GaussianPrediction, RobustParams, RobustRewardModel};
pub use scalar::Scalar;
pub use scenarios::{Condition, GeneratedScenario, Knowledge, PolicySpec, ShiftSpec};

pub type BanditDataset64 = BanditDataset<f64>;
pub type BanditDataset32 = BanditDataset<f32>;
pub type RobustParams64 = RobustParams<f64>;
pub type RobustParams32 = RobustParams<f32>;
pub type RobustRewardModel64 = RobustRewardModel<f64>;
pub type RobustRewardModel32 = RobustRewardModel<f32>;
pub type RatioModel64 = RatioModel<f64>;
pub type GeneratedScenario64 = GeneratedScenario<f64>;
