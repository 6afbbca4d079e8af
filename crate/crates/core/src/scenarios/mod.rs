//! Classification-to-bandit conversion: policies, covariate shifts and the
//! generation protocol, with the ground-truth ratios kept for known-ratio
//! experiments.

mod export;
mod generate;
pub mod pca;
pub mod policies;
pub mod shift;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use export::export_scenario;
pub use generate::{
    generate, Condition, GeneratedScenario, Knowledge, ScenarioOptions, ValueMode,
};
pub use policies::{make_policy, PolicyInput, PolicySpec, SoftenedPolicy};
pub use shift::{gaussian_shift_weights, tweak1_shift_weights, GaussianShift, ShiftSpec};

/// An independent random stream derived from `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A uniform `[0, 1)` value addressed by `(seed, stream, id)`, so per-context
/// draws do not depend on evaluation order.
pub(crate) fn context_uniform(seed: u64, stream: u64, id: usize) -> f64 {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(id as u128 * 2);
    rng.random::<f64>()
}
