//! Reproducible synthetic generators and analytic evaluators: the quadrant
//! model, glyph scenes, jittered two-bar images, and the two-expert
//! log-likelihood landscape.
//!
//! # Randomness contract
//!
//! Every generator is a pure function of its configuration and seed. The
//! generator is ChaCha8 (`rand_chacha`), keyed with `seed_from_u64(seed)`;
//! sample `i` of a dataset draws from the independent ChaCha stream `i`
//! (`set_stream(i)`), so per-sample generation can be parallelized without
//! changing output. Within a sample, draws happen in the documented
//! per-generator order. Golden files remain stable as long as the pinned
//! `rand`/`rand_chacha` versions are kept.

pub mod bars;
pub mod landscape;
pub mod quadrant;
pub mod scene;

pub use bars::{gen_bars, BarLetterCfg};
pub use landscape::{landscape, landscape_value, Landscape};
pub use quadrant::{gen_quadrant, ground_truth_cross_entropy, QuadrantModelCfg};
pub use scene::{default_glyph_bank, gen_scene, run_scene_demo, scene_model, SceneCfg, SceneOutcome, SceneSample};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Inference(#[from] crate::inference::InferenceError),
    #[error(transparent)]
    Likelihood(#[from] crate::likelihood::LikelihoodError),
    #[error(transparent)]
    Transform(#[from] crate::transform::TransformError),
    #[error(transparent)]
    Compose(#[from] crate::compose::ComposeError),
}

/// ChaCha8 keyed by `seed`, positioned on substream `stream`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
