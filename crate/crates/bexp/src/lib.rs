//! Compositional product-Bernoulli expert models for binary data.
//!
//! A model is a bank of *experts*, each a Bernoulli template `μ_k ∈ [0,1]^D`.
//! A [`compose::Rule`] merges the per-dimension expert opinions into one
//! composed template, which scores binary observations under a product
//! Bernoulli likelihood. The crate provides:
//!
//! * seven composition rules, from noisy-or to the extremal max-minus-min
//!   rule ([`compose`]);
//! * Bernoulli log-likelihoods and the truncation / uniform-mixing template
//!   robustifications ([`likelihood`]);
//! * discrete shift/rotation transforms on image-shaped templates
//!   ([`transform`]);
//! * likelihood matching pursuit, a greedy sparse inference procedure that
//!   adds one `(expert, transform)` pair at a time ([`inference`]);
//! * batch and online EM-style learning with sequential expert
//!   initialization and a Gaussian model of the spatial expert arrangement
//!   ([`learning`]);
//! * reproducible synthetic generators and analytic evaluators used by the
//!   test suites and the `bexp` CLI ([`synthetic`]).
//!
//! Parallel sections (candidate scoring, per-example inference) run on an
//! internal rayon pool; set `BE_THREADS` to cap the worker count.
//!
//! ```
//! use bexp::compose::{compose, OpinionVector, Rule};
//! use bexp::inference::{lmp_infer, ExpertModel};
//! use bexp::likelihood::{BernoulliTemplate, BinaryVector};
//! use bexp::transform::TransformGrid;
//!
//! // Two opposing opinions cancel into uncertainty under max-minus-min.
//! let opinions = OpinionVector::new(vec![0.9, 0.1])?;
//! assert!((compose(Rule::max_minus_min(), &opinions)? - 0.5).abs() < 1e-12);
//!
//! // Matching pursuit explains an observation with the experts that
//! // cover it: one voting the first half on, one voting the second off.
//! let on = BernoulliTemplate::new(vec![0.9, 0.9, 0.5, 0.5])?;
//! let off = BernoulliTemplate::new(vec![0.5, 0.5, 0.1, 0.1])?;
//! let model = ExpertModel::new(
//!     Rule::max_minus_min(),
//!     vec![on, off],
//!     TransformGrid::identity(),
//!     1.0,
//!     true,
//! )?;
//! let x = BinaryVector::new(vec![1, 1, 0, 0])?;
//! let rep = lmp_infer(&model, &x, false)?;
//! assert_eq!(rep.picks.len(), 2);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod compose;
pub mod inference;
pub mod learning;
pub mod likelihood;
mod parallel;
pub mod synthetic;
pub mod transform;

pub use compose::{OpinionVector, Rule};
pub use inference::{ExpertModel, Representation};
pub use likelihood::{BernoulliTemplate, BinaryVector};
pub use transform::{TransformGrid, TransformId};

/// Global probability floor: values are clipped to `[DELTA, 1 - DELTA]`
/// before odds, log-odds or logarithms are taken.
pub const DELTA: f64 = 1e-7;

/// Minimum log-likelihood improvement for accepting another pursuit step.
pub const TAU: f64 = 1e-9;
