//! Product-Bernoulli likelihoods and the two template robustifications:
//! truncation toward 1/2 and mixing with the uniform distribution.

use crate::DELTA;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LikelihoodError {
    #[error("probability {0} outside [0,1]")]
    ProbOutOfRange(f64),
    #[error("bit value {0} is not 0 or 1")]
    NotABit(u8),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("shape {h}x{w} does not cover dimension {dim}")]
    ShapeMismatch { h: usize, w: usize, dim: usize },
    #[error("data must be nonempty")]
    Empty,
    #[error("mixing weight {0} outside (0,1)")]
    InvalidAlpha(f64),
}

/// An expert: a length-D vector of Bernoulli probabilities, optionally
/// carrying an `(H, W)` image shape with `H * W = D`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliTemplate {
    probs: Vec<f64>,
    shape: Option<(usize, usize)>,
}

impl BernoulliTemplate {
    pub fn new(probs: Vec<f64>) -> Result<Self, LikelihoodError> {
        if probs.is_empty() {
            return Err(LikelihoodError::Empty);
        }
        for &p in &probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(LikelihoodError::ProbOutOfRange(p));
            }
        }
        Ok(BernoulliTemplate { probs, shape: None })
    }

    /// Attaches an image shape; required by the transform module.
    pub fn with_shape(mut self, h: usize, w: usize) -> Result<Self, LikelihoodError> {
        if h * w != self.probs.len() {
            return Err(LikelihoodError::ShapeMismatch {
                h,
                w,
                dim: self.probs.len(),
            });
        }
        self.shape = Some((h, w));
        Ok(self)
    }

    /// A constant template, shaped when `shape` is given.
    pub fn filled(value: f64, dim: usize, shape: Option<(usize, usize)>) -> Self {
        let t = BernoulliTemplate::new(vec![value; dim]).expect("constant in range");
        match shape {
            Some((h, w)) => t.with_shape(h, w).expect("shape covers dim"),
            None => t,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }
}

/// One binary observation: a length-D vector of bits, shaped like the
/// templates it is scored against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryVector {
    bits: Vec<u8>,
    shape: Option<(usize, usize)>,
}

impl BinaryVector {
    pub fn new(bits: Vec<u8>) -> Result<Self, LikelihoodError> {
        if bits.is_empty() {
            return Err(LikelihoodError::Empty);
        }
        for &b in &bits {
            if b > 1 {
                return Err(LikelihoodError::NotABit(b));
            }
        }
        Ok(BinaryVector { bits, shape: None })
    }

    pub fn with_shape(mut self, h: usize, w: usize) -> Result<Self, LikelihoodError> {
        if h * w != self.bits.len() {
            return Err(LikelihoodError::ShapeMismatch {
                h,
                w,
                dim: self.bits.len(),
            });
        }
        self.shape = Some((h, w));
        Ok(self)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }
}

#[inline]
fn clip(p: f64) -> f64 {
    p.clamp(DELTA, 1.0 - DELTA)
}

/// Per-dimension Bernoulli log-likelihood with the global probability floor.
#[inline]
pub(crate) fn log_likelihood_term(bit: u8, prob: f64) -> f64 {
    let p = clip(prob);
    if bit == 1 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// Log-likelihood of `x` under the product Bernoulli distribution with
/// template `mu`, in nats. Template entries are clipped to
/// `[DELTA, 1 - DELTA]` before taking logs, so the result is finite and
/// nonpositive.
pub fn log_likelihood(x: &BinaryVector, mu: &BernoulliTemplate) -> Result<f64, LikelihoodError> {
    if x.dim() != mu.dim() {
        return Err(LikelihoodError::DimensionMismatch(x.dim(), mu.dim()));
    }
    Ok(x.bits()
        .iter()
        .zip(mu.probs())
        .map(|(&b, &p)| log_likelihood_term(b, p))
        .sum())
}

/// Truncated template `max(1/2, μ(d))`: its likelihood depends only on the
/// data inside the expert's support, which robustifies the first pursuit
/// step for write-black models.
pub fn truncate_template(mu: &BernoulliTemplate) -> BernoulliTemplate {
    let probs = mu.probs().iter().map(|&p| p.max(0.5)).collect();
    let t = BernoulliTemplate::new(probs).expect("truncation stays in range");
    match mu.shape() {
        Some((h, w)) => t.with_shape(h, w).expect("shape preserved"),
        None => t,
    }
}

/// Convex combination toward the uniform template:
/// `α·μ(d) + (1-α)/2`, with `α ∈ (0,1)`.
pub fn mix_uniform(mu: &BernoulliTemplate, alpha: f64) -> Result<BernoulliTemplate, LikelihoodError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LikelihoodError::InvalidAlpha(alpha));
    }
    let probs = mu
        .probs()
        .iter()
        .map(|&p| alpha * p + (1.0 - alpha) * 0.5)
        .collect();
    let t = BernoulliTemplate::new(probs).expect("mixing stays in range");
    Ok(match mu.shape() {
        Some((h, w)) => t.with_shape(h, w).expect("shape preserved"),
        None => t,
    })
}
