//! Composition rules: functions `γ: [0,1]^K → [0,1]` that merge the
//! per-dimension opinions of K experts into one composed probability.
//!
//! Rules come in two families. *Asymmetric* rules ([`Rule::NoisyOr`],
//! [`Rule::SumOfOdds`], [`Rule::Max`]) drive write-black models: an expert
//! abstains with opinion 0 and can only vote a variable "on". *Symmetric*
//! rules abstain at 1/2 and vote in both directions. The extremal
//! [`Rule::MaxMinusMin`] rule keeps only the most extreme opinions on each
//! side of its abstention point `q`, so duplicated experts cannot inflate
//! the likelihood and opposing votes cancel into uncertainty.

use crate::likelihood::BernoulliTemplate;
use crate::DELTA;
use thiserror::Error;

/// Largest K for which the exact normalized-sum interpolation is evaluated.
pub const NORMALIZED_SUM_EXACT_MAX_K: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ComposeError {
    #[error("opinion {0} outside [0,1]")]
    OpinionOutOfRange(f64),
    #[error("arithmetic mean of zero opinions is undefined")]
    EmptyMean,
    #[error("exact normalized sum supports at most {NORMALIZED_SUM_EXACT_MAX_K} experts, got {0}")]
    TooManyExperts(usize),
    #[error("max-minus-min requires q in (0,1), got {0}")]
    InvalidQ(f64),
    #[error("template dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// A composition rule together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    /// Disjunction: `1 - Π (1 - p_k)`.
    NoisyOr,
    /// Composed odds are the sum of individual odds.
    SumOfOdds,
    /// Only the strongest opinion matters.
    Max,
    /// Equal mixture of the experts; has no abstention value.
    ArithmeticMean,
    /// Logistic function of the summed log-odds.
    SumOfLogOdds,
    /// Lattice rule on `{0, 1/2, 1}^K`, multilinearly interpolated in between.
    NormalizedSumExact,
    /// The lattice formula evaluated directly on real-valued opinions.
    NormalizedSumApprox,
    /// `q + (max - q)_+ - (q - min)_+`: extremal, duplicate-proof,
    /// opposition-penalizing.
    MaxMinusMin {
        /// Abstention point, in (0,1).
        q: f64,
    },
}

impl Rule {
    /// Max-minus-min with the default abstention point 1/2.
    pub fn max_minus_min() -> Self {
        Rule::MaxMinusMin { q: 0.5 }
    }

    /// The opinion value that leaves any composition unchanged, or `None`
    /// for the arithmetic mean, which cannot abstain.
    pub fn abstention(&self) -> Option<f64> {
        match self {
            Rule::NoisyOr | Rule::SumOfOdds | Rule::Max => Some(0.0),
            Rule::ArithmeticMean => None,
            Rule::SumOfLogOdds | Rule::NormalizedSumExact | Rule::NormalizedSumApprox => Some(0.5),
            Rule::MaxMinusMin { q } => Some(*q),
        }
    }

    /// Asymmetric rules encode "no vote" as 0 and drive write-black models.
    pub fn is_asymmetric(&self) -> bool {
        matches!(self, Rule::NoisyOr | Rule::SumOfOdds | Rule::Max)
    }

    /// A model is write-black when its abstention value is 0. This covers
    /// the asymmetric rules and max-minus-min in its `q = 0` limit.
    pub fn is_write_black(&self) -> bool {
        self.abstention() == Some(0.0)
    }

    /// Out-of-frame fill value for transformed templates: the abstention
    /// value, or 1/2 for the mean.
    pub fn fill(&self) -> f64 {
        self.abstention().unwrap_or(0.5)
    }

    /// Threshold separating "votes on" from "votes off" opinions when
    /// assigning extremal responsibilities.
    pub fn responsibility_q(&self) -> f64 {
        match self {
            Rule::MaxMinusMin { q } => *q,
            r if r.is_asymmetric() => 0.0,
            _ => 0.5,
        }
    }

    fn validate(&self) -> Result<(), ComposeError> {
        // q = 0 is additionally allowed: it is the exact reduction of
        // max-minus-min to the max rule.
        if let Rule::MaxMinusMin { q } = self {
            if !(*q >= 0.0 && *q < 1.0) {
                return Err(ComposeError::InvalidQ(*q));
            }
        }
        Ok(())
    }
}

/// A length-K vector of expert opinions, each in [0,1]. K = 0 is allowed;
/// composing an empty vector yields the rule's abstention value.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionVector(Vec<f64>);

impl OpinionVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ComposeError> {
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(ComposeError::OpinionOutOfRange(v));
            }
        }
        Ok(OpinionVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(DELTA, 1.0 - DELTA)
}

/// Composes K expert opinions into one probability.
///
/// K = 0 returns the rule's abstention value (an error for the arithmetic
/// mean). The max-minus-min rule reads the negative part as a magnitude, so
/// opposing votes subtract: `γ = q + (max - q)_+ - (q - min)_+`.
pub fn compose(rule: Rule, opinions: &OpinionVector) -> Result<f64, ComposeError> {
    rule.validate()?;
    let p = opinions.values();
    if p.is_empty() {
        return rule.abstention().ok_or(ComposeError::EmptyMean);
    }
    Ok(match rule {
        Rule::NoisyOr => compose_slice_unchecked(rule, p),
        Rule::SumOfOdds => compose_slice_unchecked(rule, p),
        Rule::Max => compose_slice_unchecked(rule, p),
        Rule::ArithmeticMean => compose_slice_unchecked(rule, p),
        Rule::SumOfLogOdds => compose_slice_unchecked(rule, p),
        Rule::NormalizedSumExact => normalized_sum_exact(opinions)?,
        Rule::NormalizedSumApprox => compose_slice_unchecked(rule, p),
        Rule::MaxMinusMin { .. } => compose_slice_unchecked(rule, p),
    })
}

/// Hot-path composition over a raw slice of already-validated opinions.
///
/// Callers must uphold the [`OpinionVector`] invariants; K = 0 yields the
/// abstention value and must not be used with the arithmetic mean or the
/// exact normalized sum beyond its K limit.
pub(crate) fn compose_slice_unchecked(rule: Rule, p: &[f64]) -> f64 {
    match rule {
        Rule::NoisyOr => 1.0 - p.iter().fold(1.0, |acc, &v| acc * (1.0 - v)),
        Rule::SumOfOdds => {
            // Only the upper end produces an infinity; clipping the lower
            // end would turn the exact abstention at 0 into phantom odds.
            let odds: f64 = p
                .iter()
                .map(|&v| {
                    let c = v.min(1.0 - DELTA);
                    c / (1.0 - c)
                })
                .sum();
            1.0 - (1.0 + odds).recip()
        }
        Rule::Max => p.iter().fold(0.0, |acc, &v| acc.max(v)),
        Rule::ArithmeticMean => p.iter().sum::<f64>() / p.len() as f64,
        Rule::SumOfLogOdds => {
            if p.is_empty() {
                return 0.5;
            }
            let t: f64 = p
                .iter()
                .map(|&v| {
                    let c = clip(v);
                    (c / (1.0 - c)).ln()
                })
                .sum();
            logistic(t)
        }
        Rule::NormalizedSumExact => normalized_sum_exact_slice(p),
        Rule::NormalizedSumApprox => normalized_sum_approx_slice(p),
        Rule::MaxMinusMin { q } => {
            if p.is_empty() {
                return q;
            }
            let mut max = f64::NEG_INFINITY;
            let mut min = f64::INFINITY;
            for &v in p {
                max = max.max(v);
                min = min.min(v);
            }
            max_minus_min(q, max, min)
        }
    }
}

/// The max-minus-min formula on a precomputed extremal pair.
#[inline]
pub(crate) fn max_minus_min(q: f64, max: f64, min: f64) -> f64 {
    q + (max - q).max(0.0) - (q - min).max(0.0)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Value of the normalized-sum lattice formula at a corner of `{0,1/2,1}^K`;
/// the all-abstain corner is 1/2 by definition.
fn lattice_corner(corners: &[f64]) -> f64 {
    let num: f64 = corners.iter().map(|&c| c - 0.5).sum();
    let den: f64 = corners.iter().map(|&c| (c - 0.5).abs()).sum();
    if den == 0.0 {
        0.5
    } else {
        0.5 * (num / den + 1.0)
    }
}

/// Exact normalized sum: multilinear interpolation of the lattice formula
/// over the cell of `{0, 1/2, 1}^K` containing the opinions.
///
/// Corner enumeration is `2^K`, so K is capped at
/// [`NORMALIZED_SUM_EXACT_MAX_K`]; larger banks must use
/// [`normalized_sum_approx`].
pub fn normalized_sum_exact(opinions: &OpinionVector) -> Result<f64, ComposeError> {
    if opinions.len() > NORMALIZED_SUM_EXACT_MAX_K {
        return Err(ComposeError::TooManyExperts(opinions.len()));
    }
    Ok(normalized_sum_exact_slice(opinions.values()))
}

fn normalized_sum_exact_slice(p: &[f64]) -> f64 {
    let k = p.len();
    if k == 0 {
        return 0.5;
    }
    // Per coordinate: the two bracketing lattice levels and the weight of
    // the upper one.
    let mut lo = vec![0.0f64; k];
    let mut hi = vec![0.0f64; k];
    let mut w = vec![0.0f64; k];
    for i in 0..k {
        if p[i] <= 0.5 {
            lo[i] = 0.0;
            hi[i] = 0.5;
            w[i] = 2.0 * p[i];
        } else {
            lo[i] = 0.5;
            hi[i] = 1.0;
            w[i] = 2.0 * p[i] - 1.0;
        }
    }
    let mut corner = vec![0.0f64; k];
    let mut total = 0.0;
    for bits in 0..(1u32 << k) {
        let mut weight = 1.0;
        for i in 0..k {
            if bits >> i & 1 == 1 {
                weight *= w[i];
                corner[i] = hi[i];
            } else {
                weight *= 1.0 - w[i];
                corner[i] = lo[i];
            }
        }
        if weight != 0.0 {
            total += weight * lattice_corner(&corner);
        }
    }
    total
}

/// Tractable stand-in for the exact normalized sum: evaluates the lattice
/// formula directly on real-valued opinions. An all-abstaining vector (zero
/// denominator) composes to 1/2.
pub fn normalized_sum_approx(opinions: &OpinionVector) -> f64 {
    normalized_sum_approx_slice(opinions.values())
}

fn normalized_sum_approx_slice(p: &[f64]) -> f64 {
    let num: f64 = p.iter().map(|&v| v - 0.5).sum();
    let den: f64 = p.iter().map(|&v| (v - 0.5).abs()).sum();
    if den == 0.0 {
        0.5
    } else {
        0.5 * (num / den + 1.0)
    }
}

/// Applies `compose` dimension-wise to a stack of templates, yielding the
/// composed global template `μ(d) = γ(μ_1(d), …, μ_K(d))`.
pub fn compose_template(
    rule: Rule,
    templates: &[BernoulliTemplate],
) -> Result<BernoulliTemplate, ComposeError> {
    rule.validate()?;
    let dim = match templates.first() {
        Some(t) => t.dim(),
        None => {
            return Err(ComposeError::DimensionMismatch(0, 0));
        }
    };
    for t in templates {
        if t.dim() != dim {
            return Err(ComposeError::DimensionMismatch(dim, t.dim()));
        }
    }
    if matches!(rule, Rule::NormalizedSumExact) && templates.len() > NORMALIZED_SUM_EXACT_MAX_K {
        return Err(ComposeError::TooManyExperts(templates.len()));
    }
    let mut opinions = vec![0.0f64; templates.len()];
    let probs = (0..dim)
        .map(|d| {
            for (k, t) in templates.iter().enumerate() {
                opinions[k] = t.probs()[d];
            }
            compose_slice_unchecked(rule, &opinions)
        })
        .collect();
    let shape = templates[0].shape();
    let composed = BernoulliTemplate::new(probs).expect("composition stays in [0,1]");
    Ok(match shape {
        Some((h, w)) => composed.with_shape(h, w).expect("shape matches dim"),
        None => composed,
    })
}
