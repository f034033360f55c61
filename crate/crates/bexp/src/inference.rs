//! Likelihood matching pursuit: greedy sequential selection of
//! `(expert, transform)` pairs that maximizes the composed Bernoulli
//! log-likelihood of one observation.
//!
//! Step one scores every candidate alone — against truncated templates when
//! `robustify_first` is set, the mandatory default for write-black models,
//! whose raw first pick would otherwise be dominated by whatever large
//! structure happens to cover most of the scene. Every later step composes
//! the current pick set with each remaining candidate and keeps the best
//! candidate while it improves the log-likelihood by more than [`TAU`].

use crate::compose::{self, Rule};
use crate::learning::GeometricModel;
use crate::likelihood::{log_likelihood_term, BernoulliTemplate, BinaryVector};
use crate::transform::{self, TransformGrid, TransformId};
use crate::{parallel, TAU};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("model must contain at least one expert")]
    EmptyModel,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("templates must share one dimension")]
    MixedTemplateDims,
    #[error("counts shape must match templates")]
    CountsShapeMismatch,
    #[error("pseudocount epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("fill value {0} outside [0,1]")]
    InvalidFill(f64),
    #[error(transparent)]
    Transform(#[from] transform::TransformError),
    #[error(transparent)]
    Compose(#[from] compose::ComposeError),
    #[error("representation refers to expert {0} outside the model")]
    UnknownExpert(usize),
}

/// A bank of experts with its composition rule, transform grid and the
/// per-dimension observation counts used by online learning.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertModel {
    pub rule: Rule,
    pub templates: Vec<BernoulliTemplate>,
    /// `counts[k][d]`: effective number of observations behind `μ_k(d)`.
    pub counts: Vec<Vec<f64>>,
    pub grid: TransformGrid,
    pub epsilon: f64,
    pub geometry: Option<GeometricModel>,
    /// When set, a representation uses each expert at most once (the
    /// learning regime); unset allows repeated experts at different
    /// transforms (the scene regime).
    pub one_transform_per_expert: bool,
    /// Out-of-frame fill for transformed templates. Defaults to the rule's
    /// abstention value; models whose templates went through an observation
    /// noise channel carry the matching background value instead.
    fill: f64,
}

impl ExpertModel {
    /// Builds a model with zeroed observation counts and no geometry.
    pub fn new(
        rule: Rule,
        templates: Vec<BernoulliTemplate>,
        grid: TransformGrid,
        epsilon: f64,
        one_transform_per_expert: bool,
    ) -> Result<Self, InferenceError> {
        if templates.is_empty() {
            return Err(InferenceError::EmptyModel);
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(InferenceError::InvalidEpsilon(epsilon));
        }
        let dim = templates[0].dim();
        if templates.iter().any(|t| t.dim() != dim) {
            return Err(InferenceError::MixedTemplateDims);
        }
        let counts = vec![vec![0.0; dim]; templates.len()];
        Ok(ExpertModel {
            rule,
            templates,
            counts,
            grid,
            epsilon,
            geometry: None,
            one_transform_per_expert,
            fill: rule.fill(),
        })
    }

    /// Overrides the out-of-frame fill value.
    pub fn with_fill(mut self, fill: f64) -> Result<Self, InferenceError> {
        if !(0.0..=1.0).contains(&fill) {
            return Err(InferenceError::InvalidFill(fill));
        }
        self.fill = fill;
        Ok(self)
    }

    pub fn with_counts(mut self, counts: Vec<Vec<f64>>) -> Result<Self, InferenceError> {
        if counts.len() != self.templates.len()
            || counts.iter().any(|c| c.len() != self.dim())
        {
            return Err(InferenceError::CountsShapeMismatch);
        }
        self.counts = counts;
        Ok(self)
    }

    pub fn num_experts(&self) -> usize {
        self.templates.len()
    }

    pub fn dim(&self) -> usize {
        self.templates[0].dim()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.templates[0].shape()
    }

    /// Out-of-frame fill for transformed templates.
    pub fn fill(&self) -> f64 {
        self.fill
    }

    /// Pursuit step budget: one pick per expert in the learning regime,
    /// two per expert when transforms may repeat.
    pub fn j_max(&self) -> usize {
        if self.one_transform_per_expert {
            self.num_experts()
        } else {
            2 * self.num_experts()
        }
    }

    /// The template of expert `k` placed under transform `t`.
    pub fn transformed(
        &self,
        k: usize,
        t: TransformId,
    ) -> Result<BernoulliTemplate, InferenceError> {
        if k >= self.num_experts() {
            return Err(InferenceError::UnknownExpert(k));
        }
        Ok(transformed_probs_to_template(
            &self.templates[k],
            transformed_probs(self, k, t)?,
        ))
    }
}

fn transformed_probs(
    model: &ExpertModel,
    k: usize,
    t: TransformId,
) -> Result<Vec<f64>, InferenceError> {
    let params = model.grid.params(t)?;
    let identity =
        params.shift_x == 0 && params.shift_y == 0 && params.rotation == 0.0;
    if identity {
        return Ok(model.templates[k].probs().to_vec());
    }
    let (h, w) = model.templates[k]
        .shape()
        .ok_or(transform::TransformError::ShapelessInput)?;
    Ok(transform::apply_raw(
        params,
        model.templates[k].probs(),
        h,
        w,
        model.fill(),
    ))
}

fn transformed_probs_to_template(like: &BernoulliTemplate, probs: Vec<f64>) -> BernoulliTemplate {
    let t = BernoulliTemplate::new(probs).expect("transform preserves range");
    match like.shape() {
        Some((h, w)) => t.with_shape(h, w).expect("shape preserved"),
        None => t,
    }
}

/// The result of a pursuit: ordered picks, the log-likelihood of the
/// un-truncated composition over the final pick set, and the per-step
/// log-likelihood trace (strictly increasing by more than [`TAU`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub picks: Vec<(usize, TransformId)>,
    pub loglik: f64,
    pub trace: Vec<f64>,
}

/// Per-dimension composition state that is updated incrementally for the
/// extremal rules and recomposed from scratch for everything else.
enum Composer {
    Extremal { q: f64, max: Vec<f64>, min: Vec<f64> },
    MaxOnly { max: Vec<f64> },
    Generic { rule: Rule, picked: Vec<Vec<f64>> },
}

impl Composer {
    fn new(rule: Rule, dim: usize) -> Self {
        match rule {
            Rule::MaxMinusMin { q } => Composer::Extremal {
                q,
                max: vec![f64::NEG_INFINITY; dim],
                min: vec![f64::INFINITY; dim],
            },
            Rule::Max => Composer::MaxOnly {
                max: vec![f64::NEG_INFINITY; dim],
            },
            _ => Composer::Generic {
                rule,
                picked: Vec::new(),
            },
        }
    }

    /// Log-likelihood of `x` under the current picks composed with `cand`.
    fn trial(&self, x: &[u8], cand: &[f64]) -> f64 {
        match self {
            Composer::Extremal { q, max, min } => x
                .iter()
                .zip(cand)
                .enumerate()
                .map(|(d, (&b, &p))| {
                    let composed =
                        compose::max_minus_min(*q, max[d].max(p), min[d].min(p));
                    log_likelihood_term(b, composed)
                })
                .sum(),
            Composer::MaxOnly { max } => x
                .iter()
                .zip(cand)
                .enumerate()
                .map(|(d, (&b, &p))| log_likelihood_term(b, max[d].max(p)))
                .sum(),
            Composer::Generic { rule, picked } => {
                let mut opinions = vec![0.0; picked.len() + 1];
                x.iter()
                    .enumerate()
                    .map(|(d, &b)| {
                        for (j, t) in picked.iter().enumerate() {
                            opinions[j] = t[d];
                        }
                        opinions[picked.len()] = cand[d];
                        log_likelihood_term(b, compose::compose_slice_unchecked(*rule, &opinions))
                    })
                    .sum()
            }
        }
    }

    fn push(&mut self, cand: &[f64]) {
        match self {
            Composer::Extremal { max, min, .. } => {
                for (d, &p) in cand.iter().enumerate() {
                    max[d] = max[d].max(p);
                    min[d] = min[d].min(p);
                }
            }
            Composer::MaxOnly { max } => {
                for (d, &p) in cand.iter().enumerate() {
                    max[d] = max[d].max(p);
                }
            }
            Composer::Generic { picked, .. } => picked.push(cand.to_vec()),
        }
    }
}

/// Deterministic argmax: higher score wins, ties go to the lower index.
fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

fn argmax_scores(scores: impl Fn(usize) -> f64 + Sync, indices: &[usize]) -> (f64, usize) {
    use rayon::prelude::*;
    if indices.len() >= 64 {
        parallel::install(|| {
            indices
                .par_iter()
                .map(|&c| (scores(c), c))
                .reduce(|| (f64::NEG_INFINITY, usize::MAX), better)
        })
    } else {
        indices
            .iter()
            .map(|&c| (scores(c), c))
            .fold((f64::NEG_INFINITY, usize::MAX), better)
    }
}

/// Runs likelihood matching pursuit for one observation.
///
/// `robustify_first` replaces each candidate by its truncated template for
/// the first pick only; later steps always compose raw templates, and the
/// returned log-likelihood comes from the un-truncated composition of the
/// final pick set.
pub fn lmp_infer(
    model: &ExpertModel,
    x: &BinaryVector,
    robustify_first: bool,
) -> Result<Representation, InferenceError> {
    if model.num_experts() == 0 {
        return Err(InferenceError::EmptyModel);
    }
    let dim = model.dim();
    if x.dim() != dim {
        return Err(InferenceError::DimensionMismatch(x.dim(), dim));
    }

    let num_t = model.grid.len();
    let candidates: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        let ids: Vec<(usize, TransformId)> = (0..model.num_experts())
            .flat_map(|k| model.grid.ids().map(move |t| (k, t)))
            .collect();
        if ids.len() >= 64 && dim >= 256 {
            parallel::install(|| {
                ids.par_iter()
                    .map(|&(k, t)| transformed_probs(model, k, t))
                    .collect::<Result<_, _>>()
            })?
        } else {
            ids.iter()
                .map(|&(k, t)| transformed_probs(model, k, t))
                .collect::<Result<_, _>>()?
        }
    };

    let bits = x.bits();
    let all: Vec<usize> = (0..candidates.len()).collect();
    let (_, first) = argmax_scores(
        |c| {
            candidates[c]
                .iter()
                .zip(bits)
                .map(|(&p, &b)| {
                    let p = if robustify_first { p.max(0.5) } else { p };
                    log_likelihood_term(b, p)
                })
                .sum()
        },
        &all,
    );

    let mut composer = Composer::new(model.rule, dim);
    composer.push(&candidates[first]);
    let mut picks = vec![(first / num_t, TransformId(first % num_t))];
    let mut picked_set = vec![false; candidates.len()];
    picked_set[first] = true;
    let mut used_expert = vec![false; model.num_experts()];
    used_expert[first / num_t] = true;

    // Trace entries are always un-truncated composition log-likelihoods.
    let mut cur_ll = composition_loglik(&composer, bits);
    let mut trace = vec![cur_ll];

    while picks.len() < model.j_max() {
        let remaining: Vec<usize> = (0..candidates.len())
            .filter(|&c| {
                if model.one_transform_per_expert {
                    !used_expert[c / num_t]
                } else {
                    !picked_set[c]
                }
            })
            .collect();
        if remaining.is_empty() {
            break;
        }
        let (best_ll, best) = argmax_scores(|c| composer.trial(bits, &candidates[c]), &remaining);
        if best_ll <= cur_ll + TAU {
            break;
        }
        composer.push(&candidates[best]);
        picks.push((best / num_t, TransformId(best % num_t)));
        picked_set[best] = true;
        used_expert[best / num_t] = true;
        cur_ll = best_ll;
        trace.push(cur_ll);
    }

    debug_assert!(trace.windows(2).all(|w| w[1] > w[0] + TAU));
    Ok(Representation {
        picks,
        loglik: cur_ll,
        trace,
    })
}

/// Greedy transform assignment that keeps every expert: the pursuit runs
/// without the improvement gate until each expert appears exactly once, in
/// order of decreasing marginal gain.
///
/// This is the online-learning regime, where every training image is
/// assumed to contain all experts (at unknown transforms) and each example
/// updates every expert; the trace may therefore decrease. Plain
/// [`lmp_infer`] remains the inference procedure whenever sparse
/// explanations are wanted.
pub fn lmp_assign_all(
    model: &ExpertModel,
    x: &BinaryVector,
    robustify_first: bool,
) -> Result<Representation, InferenceError> {
    let dim = model.dim();
    if x.dim() != dim {
        return Err(InferenceError::DimensionMismatch(x.dim(), dim));
    }
    let num_t = model.grid.len();
    let candidates: Vec<Vec<f64>> = (0..model.num_experts())
        .flat_map(|k| model.grid.ids().map(move |t| (k, t)))
        .map(|(k, t)| transformed_probs(model, k, t))
        .collect::<Result<_, _>>()?;
    let bits = x.bits();

    let all: Vec<usize> = (0..candidates.len()).collect();
    let (_, first) = argmax_scores(
        |c| {
            candidates[c]
                .iter()
                .zip(bits)
                .map(|(&p, &b)| {
                    let p = if robustify_first { p.max(0.5) } else { p };
                    log_likelihood_term(b, p)
                })
                .sum()
        },
        &all,
    );

    let mut composer = Composer::new(model.rule, dim);
    composer.push(&candidates[first]);
    let mut picks = vec![(first / num_t, TransformId(first % num_t))];
    let mut used_expert = vec![false; model.num_experts()];
    used_expert[first / num_t] = true;
    let mut cur_ll = composition_loglik(&composer, bits);
    let mut trace = vec![cur_ll];

    while picks.len() < model.num_experts() {
        let remaining: Vec<usize> = (0..candidates.len())
            .filter(|&c| !used_expert[c / num_t])
            .collect();
        let (best_ll, best) = argmax_scores(|c| composer.trial(bits, &candidates[c]), &remaining);
        composer.push(&candidates[best]);
        picks.push((best / num_t, TransformId(best % num_t)));
        used_expert[best / num_t] = true;
        cur_ll = best_ll;
        trace.push(cur_ll);
    }
    Ok(Representation {
        picks,
        loglik: cur_ll,
        trace,
    })
}

/// Log-likelihood of the current (un-truncated) composition.
fn composition_loglik(composer: &Composer, bits: &[u8]) -> f64 {
    match composer {
        Composer::Extremal { q, max, min } => bits
            .iter()
            .enumerate()
            .map(|(d, &b)| log_likelihood_term(b, compose::max_minus_min(*q, max[d], min[d])))
            .sum(),
        Composer::MaxOnly { max } => bits
            .iter()
            .enumerate()
            .map(|(d, &b)| log_likelihood_term(b, max[d]))
            .sum(),
        Composer::Generic { rule, picked } => {
            let mut opinions = vec![0.0; picked.len()];
            bits.iter()
                .enumerate()
                .map(|(d, &b)| {
                    for (j, t) in picked.iter().enumerate() {
                        opinions[j] = t[d];
                    }
                    log_likelihood_term(b, compose::compose_slice_unchecked(*rule, &opinions))
                })
                .sum()
        }
    }
}

/// Per observation coordinate: the pick index carrying the maximal opinion
/// (if it exceeds `q`) and the one carrying the minimal opinion (if below
/// `q`).
pub type Responsibilities = Vec<(Option<usize>, Option<usize>)>;

/// Per-dimension extremal responsibilities of a representation's picks.
///
/// For each observation coordinate `d`, `k_star` is the index *into the
/// pick list* of the pick with the largest transformed opinion at `d`,
/// provided that opinion exceeds the rule's threshold `q`; `l_star` is the
/// analogous minimal pick below `q`. Ties resolve to the earliest pick.
/// Under write-black rules (`q = 0`) `l_star` is always `None`.
pub fn extremal_responsibilities(
    model: &ExpertModel,
    rep: &Representation,
) -> Result<Responsibilities, InferenceError> {
    let q = model.rule.responsibility_q();
    let dim = model.dim();
    let opinions: Vec<Vec<f64>> = rep
        .picks
        .iter()
        .map(|&(k, t)| transformed_probs(model, k, t))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        let mut k_star = None;
        let mut l_star = None;
        for (j, o) in opinions.iter().enumerate() {
            if o[d] > max {
                max = o[d];
                k_star = Some(j);
            }
            if o[d] < min {
                min = o[d];
                l_star = Some(j);
            }
        }
        out.push((
            k_star.filter(|_| max > q),
            l_star.filter(|_| min < q),
        ));
    }
    Ok(out)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::likelihood::log_likelihood;
    use crate::DELTA;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tpl(p: &[f64]) -> BernoulliTemplate {
        BernoulliTemplate::new(p.to_vec()).unwrap()
    }

    fn bits(b: &[u8]) -> BinaryVector {
        BinaryVector::new(b.to_vec()).unwrap()
    }

    fn identity_model(rule: Rule, templates: Vec<BernoulliTemplate>) -> ExpertModel {
        ExpertModel::new(rule, templates, TransformGrid::identity(), 1.0, true).unwrap()
    }

    #[test]
    fn perfect_single_match_dominates() {
        let lo = DELTA;
        let hi = 1.0 - DELTA;
        let x = bits(&[1, 0, 1, 1, 0, 0]);
        let perfect = tpl(&[hi, lo, hi, hi, lo, lo]);
        let other = tpl(&[0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
        let model = identity_model(Rule::max_minus_min(), vec![other, perfect]);
        let rep = lmp_infer(&model, &x, false).unwrap();
        assert_eq!(rep.picks, vec![(1, model.grid.identity_id())]);
        assert_eq!(rep.trace.len(), 1);
        assert!(rep.loglik > -1e-4);
    }

    #[test]
    fn disjoint_write_black_experts_are_both_picked() {
        // Expert 0 owns dims 0..4 (larger support), expert 1 owns dims 4..7.
        let mut a = vec![0.0; 8];
        let mut b = vec![0.0; 8];
        for d in 0..4 {
            a[d] = 0.9;
        }
        for d in 4..7 {
            b[d] = 0.9;
        }
        let x = bits(&[1, 1, 1, 1, 1, 1, 1, 0]);
        let model = identity_model(Rule::Max, vec![tpl(&a), tpl(&b)]);
        let rep = lmp_infer(&model, &x, true).unwrap();
        assert_eq!(rep.picks.len(), 2);
        // Larger-support expert first.
        assert_eq!(rep.picks[0].0, 0);
        assert_eq!(rep.picks[1].0, 1);

        // Brute force over all pick subsets confirms the two-pick set wins.
        let id = model.grid.identity_id();
        let mut best = f64::NEG_INFINITY;
        let mut best_set = Vec::new();
        for mask in 0u32..4 {
            let chosen: Vec<_> = (0..2).filter(|k| mask >> k & 1 == 1).collect();
            let composed: Vec<f64> = (0..8)
                .map(|d| {
                    chosen
                        .iter()
                        .map(|&k| model.transformed(k, id).unwrap().probs()[d])
                        .fold(0.0f64, f64::max)
                })
                .collect();
            let ll = log_likelihood(&x, &tpl(&composed)).unwrap();
            if ll > best {
                best = ll;
                best_set = chosen;
            }
        }
        assert_eq!(best_set, vec![0, 1]);
        assert!((rep.loglik - best).abs() < 1e-12);
    }

    #[test]
    fn noise_input_stays_near_baseline_and_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let dim = 64;
        let near_uniform = tpl(&(0..dim)
            .map(|_| 0.5 + rng.random_range(-0.02..=0.02))
            .collect::<Vec<_>>());
        let informative: Vec<BernoulliTemplate> = (0..3)
            .map(|_| {
                tpl(&(0..dim)
                    .map(|_| rng.random_range(0.05..=0.95))
                    .collect::<Vec<_>>())
            })
            .collect();
        let mut bank = vec![near_uniform.clone()];
        bank.extend(informative);
        let model = identity_model(Rule::max_minus_min(), bank);
        for _ in 0..50 {
            let x = BinaryVector::new((0..dim).map(|_| rng.random_range(0..=1u8)).collect())
                .unwrap();
            let rep = lmp_infer(&model, &x, false).unwrap();
            for w in rep.trace.windows(2) {
                assert!(w[1] > w[0] + TAU);
            }
            // The pursuit can never do worse than the best single candidate,
            // in particular the near-uniform one.
            let floor = log_likelihood(&x, &near_uniform).unwrap();
            assert!(rep.loglik >= floor - 1e-12);
            assert!((rep.trace[0] - dim as f64 * 0.5f64.ln()).abs() < 0.1 * dim as f64);
        }
    }

    #[test]
    fn greedy_never_beats_best_subset_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut equal = 0usize;
        let total = 200usize;
        for _ in 0..total {
            let k = rng.random_range(1..=4usize);
            let dim = rng.random_range(2..=12usize);
            let templates: Vec<BernoulliTemplate> = (0..k)
                .map(|_| {
                    tpl(&(0..dim)
                        .map(|_| rng.random_range(0.0..=1.0))
                        .collect::<Vec<_>>())
                })
                .collect();
            let x = BinaryVector::new((0..dim).map(|_| rng.random_range(0..=1u8)).collect())
                .unwrap();
            let model = identity_model(Rule::max_minus_min(), templates.clone());
            let rep = lmp_infer(&model, &x, false).unwrap();

            let mut best = f64::NEG_INFINITY;
            for mask in 0u32..(1 << k) {
                let chosen: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
                let composed: Vec<f64> = (0..dim)
                    .map(|d| {
                        let ops: Vec<f64> =
                            chosen.iter().map(|&i| templates[i].probs()[d]).collect();
                        compose::compose_slice_unchecked(Rule::max_minus_min(), &ops)
                    })
                    .collect();
                best = best.max(log_likelihood(&x, &tpl(&composed)).unwrap());
            }
            assert!(rep.loglik <= best + 1e-9, "greedy {} > best {best}", rep.loglik);
            if (best - rep.loglik).abs() < 1e-6 {
                equal += 1;
            }
        }
        // Gaps are expected on deceptive instances; report the rate.
        println!("greedy = exhaustive on {equal}/{total} random instances");
        assert!(equal > 0);
    }

    #[test]
    fn incremental_composition_matches_recomposition_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for rule in [Rule::Max, Rule::max_minus_min(), Rule::MaxMinusMin { q: 0.3 }] {
            for _ in 0..50 {
                let k = rng.random_range(2..=5usize);
                let dim = rng.random_range(1..=16usize);
                let templates: Vec<BernoulliTemplate> = (0..k)
                    .map(|_| {
                        tpl(&(0..dim)
                            .map(|_| rng.random_range(0.0..=1.0))
                            .collect::<Vec<_>>())
                    })
                    .collect();
                let x = BinaryVector::new(
                    (0..dim).map(|_| rng.random_range(0..=1u8)).collect(),
                )
                .unwrap();
                let model = identity_model(rule, templates.clone());
                let rep = lmp_infer(&model, &x, false).unwrap();
                let picked: Vec<BernoulliTemplate> = rep
                    .picks
                    .iter()
                    .map(|&(kk, t)| model.transformed(kk, t).unwrap())
                    .collect();
                let composed = compose::compose_template(rule, &picked).unwrap();
                let reference = log_likelihood(&x, &composed).unwrap();
                assert_eq!(rep.loglik.to_bits(), reference.to_bits());
            }
        }
    }

    #[test]
    fn first_step_is_argmax_over_robustified_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 24;
        let templates: Vec<BernoulliTemplate> = (0..5)
            .map(|_| {
                tpl(&(0..dim)
                    .map(|_| rng.random_range(0.0..=1.0))
                    .collect::<Vec<_>>())
            })
            .collect();
        let x =
            BinaryVector::new((0..dim).map(|_| rng.random_range(0..=1u8)).collect()).unwrap();
        let model = identity_model(Rule::Max, templates.clone());
        let rep = lmp_infer(&model, &x, true).unwrap();
        let id = model.grid.identity_id();
        let scores: Vec<f64> = (0..5)
            .map(|k| {
                let truncated = crate::likelihood::truncate_template(&templates[k]);
                log_likelihood(&x, &truncated).unwrap()
            })
            .collect();
        let best = scores
            .iter()
            .enumerate()
            .fold((f64::NEG_INFINITY, usize::MAX), |acc, (i, &s)| {
                super::better(acc, (s, i))
            });
        assert_eq!(rep.picks[0], (best.1, id));
    }

    #[test]
    fn responsibilities_examples() {
        let id_grid = TransformGrid::identity();
        let id = id_grid.identity_id();

        let single = identity_model(Rule::max_minus_min(), vec![tpl(&[0.9])]);
        let rep = Representation {
            picks: vec![(0, id)],
            loglik: 0.0,
            trace: vec![0.0],
        };
        assert_eq!(
            extremal_responsibilities(&single, &rep).unwrap(),
            vec![(Some(0), None)]
        );

        let two = identity_model(
            Rule::max_minus_min(),
            vec![tpl(&[0.9]), tpl(&[0.1])],
        );
        let rep2 = Representation {
            picks: vec![(0, id), (1, id)],
            loglik: 0.0,
            trace: vec![0.0],
        };
        assert_eq!(
            extremal_responsibilities(&two, &rep2).unwrap(),
            vec![(Some(0), Some(1))]
        );

        let abstain = identity_model(
            Rule::max_minus_min(),
            vec![tpl(&[0.5]), tpl(&[0.5])],
        );
        assert_eq!(
            extremal_responsibilities(&abstain, &rep2).unwrap(),
            vec![(None, None)]
        );

        // Ties break toward the earliest pick.
        let tied = identity_model(
            Rule::max_minus_min(),
            vec![tpl(&[0.8]), tpl(&[0.8])],
        );
        assert_eq!(
            extremal_responsibilities(&tied, &rep2).unwrap(),
            vec![(Some(0), None)]
        );

        // Max rule: q treated as 0, so l_star is never defined.
        let max_model = identity_model(Rule::Max, vec![tpl(&[0.0]), tpl(&[0.4])]);
        assert_eq!(
            extremal_responsibilities(&max_model, &rep2).unwrap(),
            vec![(Some(1), None)]
        );
    }

    #[test]
    fn empty_model_and_dim_mismatch_are_errors() {
        assert!(matches!(
            ExpertModel::new(
                Rule::Max,
                vec![],
                TransformGrid::identity(),
                1.0,
                true
            ),
            Err(InferenceError::EmptyModel)
        ));
        let model = identity_model(Rule::Max, vec![tpl(&[0.5, 0.5])]);
        assert_eq!(
            lmp_infer(&model, &bits(&[1]), false),
            Err(InferenceError::DimensionMismatch(1, 2))
        );
    }
}
