//! EM-style learning for composed expert models.
//!
//! The hard E-step runs likelihood matching pursuit per example; the M-step
//! re-estimates each expert from the examples whose extremal responsibility
//! it carried, smoothed by a Beta(ε,ε) pseudocount. An online variant folds
//! one example at a time into per-dimension running averages and supports
//! sequential initialization: start from a single global template and append
//! a new expert whenever the current model explains an example poorly. The
//! spatial arrangement of the experts is summarized by a joint Gaussian over
//! their per-expert shift/rotation parameters.

use crate::compose::{self, Rule};
use crate::inference::{
    extremal_responsibilities, lmp_assign_all, lmp_infer, ExpertModel, InferenceError,
    Representation,
};
use crate::likelihood::{BernoulliTemplate, BinaryVector};
use crate::transform::{self, TransformGrid, TransformId, TransformParams};
use crate::parallel;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("dataset must be nonempty")]
    EmptyDataset,
    #[error("got {0} representations for {1} examples")]
    RepsLengthMismatch(usize, usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("geometry needs at least 2 qualifying representations, got {0}")]
    TooFewConfigurations(usize),
    #[error("geometry covariance is not factorizable")]
    DegenerateCovariance,
    #[error("geometry mean/covariance must be finite and symmetric")]
    InvalidGeometry,
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Transform(#[from] transform::TransformError),
}

/// Joint Gaussian over the concatenated per-expert
/// `(shift_x, shift_y, rotation)` parameters, experts ordered by index.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricModel {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    sample_count: usize,
}

impl GeometricModel {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>, sample_count: usize) -> Result<Self, LearnError> {
        let n = mean.len();
        if n == 0 || n % 3 != 0 || cov.len() != n || cov.iter().any(|r| r.len() != n) {
            return Err(LearnError::InvalidGeometry);
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::InvalidGeometry);
        }
        for (i, row) in cov.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || (v - cov[j][i]).abs() > 1e-9 {
                    return Err(LearnError::InvalidGeometry);
                }
            }
        }
        Ok(GeometricModel {
            mean,
            cov,
            sample_count,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[Vec<f64>] {
        &self.cov
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn num_experts(&self) -> usize {
        self.mean.len() / 3
    }

    /// Mean transform of expert `k`, snapped to the grid.
    pub fn mean_transform(&self, grid: &TransformGrid, k: usize) -> TransformId {
        grid.nearest(self.mean[3 * k], self.mean[3 * k + 1], self.mean[3 * k + 2])
    }
}

/// How batch training obtains its initial expert bank.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchInit {
    /// `k_max` templates with i.i.d. Uniform(lo, hi) entries.
    Random { lo: f64, hi: f64 },
    /// Continue from an existing model (for example the online result).
    FromModel(Box<ExpertModel>),
}

/// Training hyperparameters shared by the batch and online procedures.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rule: Rule,
    /// Beta(ε,ε) pseudocount; ε = 1 is the uniform prior used throughout.
    pub epsilon: f64,
    pub k_max: usize,
    pub epochs: usize,
    /// Online mode spawns a new expert when the per-pixel average
    /// log-likelihood of an example falls below this threshold (nats).
    pub theta_add: f64,
    pub seed: u64,
    pub grid: TransformGrid,
    pub init: BatchInit,
}

impl TrainConfig {
    pub fn new(rule: Rule, k_max: usize) -> Self {
        TrainConfig {
            rule,
            epsilon: 1.0,
            k_max,
            epochs: 5,
            theta_add: 0.6f64.ln(),
            seed: 0,
            grid: TransformGrid::identity(),
            init: BatchInit::Random { lo: 0.3, hi: 0.7 },
        }
    }

    fn validate(&self) -> Result<(), LearnError> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(LearnError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.k_max == 0 {
            return Err(LearnError::InvalidConfig("k_max must be at least 1".into()));
        }
        if let BatchInit::Random { lo, hi } = self.init {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(LearnError::InvalidConfig(format!(
                    "random init range ({lo}, {hi}) invalid"
                )));
            }
        }
        Ok(())
    }
}

/// Whether the pursuit robustifies its first step for this rule: write-black
/// models must, symmetric ones need not.
pub fn default_robustify(rule: Rule) -> bool {
    rule.is_write_black()
}

/// Template coordinate -> observation index map for one transform, usable
/// on shapeless data only for the identity transform.
fn forward_map_for(
    params: TransformParams,
    dim: usize,
    shape: Option<(usize, usize)>,
) -> Result<Vec<Option<usize>>, LearnError> {
    let identity = params.shift_x == 0 && params.shift_y == 0 && params.rotation == 0.0;
    match shape {
        Some((h, w)) => Ok(transform::forward_map(params, h, w)),
        None if identity => Ok((0..dim).map(Some).collect()),
        None => Err(LearnError::Transform(
            transform::TransformError::ShapelessInput,
        )),
    }
}

/// Batch M-step: re-estimates every expert template from the examples whose
/// extremal responsibility it carried.
///
/// For expert `k` and template coordinate `d`, the update is
/// `μ_k(d) = (Σ assigned pulled-back bits + ε) / (Σ assignments + 2ε)`,
/// where an example counts iff `k`'s pick is `k*` or `l*` at the observation
/// coordinate that `d` maps to and that coordinate lies inside the image.
/// Under write-black rules (`q = 0`) only `k*` ever contributes.
///
/// Cells with no assignments keep their previous value (and count) unless
/// `strict_eq1` is set, in which case they collapse to the prior mean 1/2.
/// Observation counts of updated cells become `assignments + 2ε`.
pub fn m_step_batch(
    model: &ExpertModel,
    data: &[BinaryVector],
    reps: &[Representation],
    strict_eq1: bool,
) -> Result<ExpertModel, LearnError> {
    if data.len() != reps.len() {
        return Err(LearnError::RepsLengthMismatch(reps.len(), data.len()));
    }
    let dim = model.dim();
    let k_total = model.num_experts();
    let mut num = vec![vec![0.0f64; dim]; k_total];
    let mut cnt = vec![vec![0.0f64; dim]; k_total];

    for (x, rep) in data.iter().zip(reps) {
        accumulate_assignments(model, x, rep, &mut num, &mut cnt)?;
    }

    let eps = model.epsilon;
    let mut out = model.clone();
    for k in 0..k_total {
        for d in 0..dim {
            if cnt[k][d] > 0.0 || strict_eq1 {
                out.templates[k].probs_mut()[d] = (num[k][d] + eps) / (cnt[k][d] + 2.0 * eps);
                out.counts[k][d] = cnt[k][d] + 2.0 * eps;
            }
        }
    }
    Ok(out)
}

fn accumulate_assignments(
    model: &ExpertModel,
    x: &BinaryVector,
    rep: &Representation,
    num: &mut [Vec<f64>],
    cnt: &mut [Vec<f64>],
) -> Result<(), LearnError> {
    if x.dim() != model.dim() {
        return Err(LearnError::Inference(InferenceError::DimensionMismatch(
            x.dim(),
            model.dim(),
        )));
    }
    let resp = extremal_responsibilities(model, rep)?;
    for (j, &(k, t)) in rep.picks.iter().enumerate() {
        if k >= model.num_experts() {
            return Err(LearnError::Inference(InferenceError::UnknownExpert(k)));
        }
        let params = model.grid.params(t)?;
        let fmap = forward_map_for(params, model.dim(), x.shape())?;
        for (d, entry) in fmap.iter().enumerate() {
            let Some(obs) = entry else { continue };
            let (k_star, l_star) = resp[*obs];
            if k_star == Some(j) || l_star == Some(j) {
                num[k][d] += x.bits()[*obs] as f64;
                cnt[k][d] += 1.0;
            }
        }
    }
    Ok(())
}

/// Hard E-step: likelihood matching pursuit per example, robustified
/// according to the model class. Examples are processed independently (and
/// in parallel) against an immutable model snapshot.
pub fn e_step(model: &ExpertModel, data: &[BinaryVector]) -> Result<Vec<Representation>, LearnError> {
    use rayon::prelude::*;
    let robustify = default_robustify(model.rule);
    let reps: Result<Vec<_>, InferenceError> = if data.len() > 1 {
        parallel::install(|| {
            data.par_iter()
                .map(|x| lmp_infer(model, x, robustify))
                .collect()
        })
    } else {
        data.iter().map(|x| lmp_infer(model, x, robustify)).collect()
    };
    Ok(reps?)
}

/// Online M-step: folds one example into the experts it was assigned to.
///
/// For each pick `(k, t)` and template coordinate `d` with an in-image
/// preimage, if the pick is extremal at the mapped observation coordinate:
/// `μ_k(d) <- (N_k(d)·μ_k(d) + x̃(d)) / (N_k(d) + 1)` and
/// `N_k(d) <- N_k(d) + 1`, where `x̃` is the pulled-back data.
pub fn online_update(
    model: &ExpertModel,
    x: &BinaryVector,
    rep: &Representation,
) -> Result<ExpertModel, LearnError> {
    let mut out = model.clone();
    online_update_mut(&mut out, x, rep)?;
    Ok(out)
}

fn online_update_mut(
    model: &mut ExpertModel,
    x: &BinaryVector,
    rep: &Representation,
) -> Result<(), LearnError> {
    if x.dim() != model.dim() {
        return Err(LearnError::Inference(InferenceError::DimensionMismatch(
            x.dim(),
            model.dim(),
        )));
    }
    let resp = extremal_responsibilities(model, rep)?;
    for (j, &(k, t)) in rep.picks.iter().enumerate() {
        if k >= model.num_experts() {
            return Err(LearnError::Inference(InferenceError::UnknownExpert(k)));
        }
        let params = model.grid.params(t)?;
        let fmap = forward_map_for(params, model.dim(), x.shape())?;
        for (d, entry) in fmap.iter().enumerate() {
            let Some(obs) = entry else { continue };
            let (k_star, l_star) = resp[*obs];
            if k_star == Some(j) || l_star == Some(j) {
                let n = model.counts[k][d];
                let mu = model.templates[k].probs_mut();
                mu[d] = (n * mu[d] + x.bits()[*obs] as f64) / (n + 1.0);
                model.counts[k][d] = n + 1.0;
            }
        }
    }
    Ok(())
}

/// The oversimplify-and-correct template for a new expert: per dimension,
/// `μ̃(d) = (x(d)+ε)/(1+2ε)` where the current composition explains the
/// example worse than `μ̃` would, abstention (1/2) everywhere else. Under
/// write-black rules the abstention branch triggers whenever the current
/// composition explains the pixel with probability at least 1/2.
pub fn init_new_expert(
    model: &ExpertModel,
    x: &BinaryVector,
    rep: &Representation,
) -> Result<BernoulliTemplate, LearnError> {
    Ok(init_new_expert_with_counts(model, x, rep)?.0)
}

pub(crate) fn init_new_expert_with_counts(
    model: &ExpertModel,
    x: &BinaryVector,
    rep: &Representation,
) -> Result<(BernoulliTemplate, Vec<f64>), LearnError> {
    if x.dim() != model.dim() {
        return Err(LearnError::Inference(InferenceError::DimensionMismatch(
            x.dim(),
            model.dim(),
        )));
    }
    let eps = model.epsilon;
    let picked: Vec<BernoulliTemplate> = rep
        .picks
        .iter()
        .map(|&(k, t)| model.transformed(k, t))
        .collect::<Result<_, _>>()?;
    let composed = compose::compose_template(model.rule, &picked)
        .map_err(InferenceError::Compose)?;
    let write_black = model.rule.is_write_black();

    let mut probs = Vec::with_capacity(x.dim());
    let mut counts = Vec::with_capacity(x.dim());
    for d in 0..x.dim() {
        let bit = x.bits()[d];
        let fresh = (bit as f64 + eps) / (1.0 + 2.0 * eps);
        let p_composed = prob_of(bit, composed.probs()[d]);
        let abstain = if write_black {
            p_composed >= 0.5
        } else {
            p_composed >= prob_of(bit, fresh)
        };
        if abstain {
            probs.push(0.5);
            counts.push(2.0 * eps);
        } else {
            probs.push(fresh);
            counts.push(1.0 + 2.0 * eps);
        }
    }
    let template = BernoulliTemplate::new(probs).expect("init stays in range");
    let template = match x.shape() {
        Some((h, w)) => template.with_shape(h, w).expect("shape matches"),
        None => template,
    };
    Ok((template, counts))
}

#[inline]
fn prob_of(bit: u8, p: f64) -> f64 {
    if bit == 1 {
        p
    } else {
        1.0 - p
    }
}

/// Per-example progress record emitted by online training.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineMilestone {
    /// Index of the example that was folded in.
    pub example: usize,
    /// Expert count after processing it.
    pub num_experts: usize,
    /// Per-pixel average log-likelihood of the example under the model it
    /// was inferred with (before any spawn or update).
    pub mean_loglik: f64,
}

#[derive(Debug, Clone)]
pub struct OnlineTrainResult {
    pub model: ExpertModel,
    pub milestones: Vec<OnlineMilestone>,
}

/// Online learning with sequential initialization.
///
/// Expert 1 is the global template `(x_1(d)+ε)/(1+2ε)` derived from the
/// first example (at the identity transform: no reference frame exists
/// yet). Each later example is assigned a transform for *every* expert
/// ([`lmp_assign_all`]: online learning assumes each image contains all
/// experts, and each image updates all of them); when the bank is below
/// `k_max` and the example's per-pixel average log-likelihood falls below
/// `theta_add`, a corrective expert is appended via [`init_new_expert`] and
/// joins the representation at the identity transform; finally the example
/// updates the extended model online.
pub fn train_online(data: &[BinaryVector], cfg: &TrainConfig) -> Result<OnlineTrainResult, LearnError> {
    cfg.validate()?;
    let Some(first) = data.first() else {
        return Err(LearnError::EmptyDataset);
    };
    let eps = cfg.epsilon;
    let seed_probs: Vec<f64> = first
        .bits()
        .iter()
        .map(|&b| (b as f64 + eps) / (1.0 + 2.0 * eps))
        .collect();
    let seed_template = match first.shape() {
        Some((h, w)) => BernoulliTemplate::new(seed_probs)
            .expect("in range")
            .with_shape(h, w)
            .expect("shape matches"),
        None => BernoulliTemplate::new(seed_probs).expect("in range"),
    };
    let mut model = ExpertModel::new(cfg.rule, vec![seed_template], cfg.grid.clone(), eps, true)?
        .with_counts(vec![vec![1.0 + 2.0 * eps; first.dim()]])?;

    let mut milestones = vec![OnlineMilestone {
        example: 0,
        num_experts: 1,
        mean_loglik: f64::NAN,
    }];
    let robustify = default_robustify(cfg.rule);
    for (i, x) in data.iter().enumerate().skip(1) {
        let mut rep = lmp_assign_all(&model, x, robustify)?;
        let mean_ll = rep.loglik / x.dim() as f64;
        if model.num_experts() < cfg.k_max && mean_ll < cfg.theta_add {
            let (template, counts) = init_new_expert_with_counts(&model, x, &rep)?;
            model.templates.push(template);
            model.counts.push(counts);
            // The corrective expert was built in this example's frame; it
            // joins the representation at the identity so its plastic cells
            // start adapting immediately.
            rep.picks.push((
                model.num_experts() - 1,
                model.grid.identity_id(),
            ));
        }
        online_update_mut(&mut model, x, &rep)?;
        milestones.push(OnlineMilestone {
            example: i,
            num_experts: model.num_experts(),
            mean_loglik: mean_ll,
        });
    }
    Ok(OnlineTrainResult { model, milestones })
}

#[derive(Debug, Clone)]
pub struct BatchTrainResult {
    pub model: ExpertModel,
    /// Mean train log-likelihood under the model each epoch started from.
    pub epoch_loglik: Vec<f64>,
}

/// Batch EM: alternates [`e_step`] and [`m_step_batch`] for `cfg.epochs`
/// iterations from either random templates or a given model.
pub fn train_batch(data: &[BinaryVector], cfg: &TrainConfig) -> Result<BatchTrainResult, LearnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let dim = data[0].dim();
    let shape = data[0].shape();
    let mut model = match &cfg.init {
        BatchInit::FromModel(m) => (**m).clone(),
        BatchInit::Random { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let templates: Vec<BernoulliTemplate> = (0..cfg.k_max)
                .map(|_| {
                    let probs: Vec<f64> =
                        (0..dim).map(|_| rng.random_range(*lo..*hi)).collect();
                    let t = BernoulliTemplate::new(probs).expect("init in range");
                    match shape {
                        Some((h, w)) => t.with_shape(h, w).expect("shape matches"),
                        None => t,
                    }
                })
                .collect();
            ExpertModel::new(cfg.rule, templates, cfg.grid.clone(), cfg.epsilon, true)?
                .with_counts(vec![vec![2.0 * cfg.epsilon; dim]; cfg.k_max])?
        }
    };

    let mut epoch_loglik = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let reps = e_step(&model, data)?;
        let mean = reps.iter().map(|r| r.loglik).sum::<f64>() / data.len() as f64;
        epoch_loglik.push(mean);
        model = m_step_batch(&model, data, &reps, true)?;
    }
    Ok(BatchTrainResult {
        model,
        epoch_loglik,
    })
}

/// Fits the Gaussian geometric component from representations in which all
/// `num_experts` experts appear exactly once. Covariance uses the n-1
/// convention.
pub fn fit_geometry(
    reps: &[Representation],
    grid: &TransformGrid,
    num_experts: usize,
) -> Result<GeometricModel, LearnError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    'rep: for rep in reps {
        if rep.picks.len() != num_experts {
            continue;
        }
        let mut by_expert: Vec<Option<TransformId>> = vec![None; num_experts];
        for &(k, t) in &rep.picks {
            if k >= num_experts || by_expert[k].is_some() {
                continue 'rep;
            }
            by_expert[k] = Some(t);
        }
        let mut row = Vec::with_capacity(3 * num_experts);
        for t in by_expert {
            let p = grid.params(t.expect("every expert present"))?;
            row.push(p.shift_x as f64);
            row.push(p.shift_y as f64);
            row.push(p.rotation);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n < 2 {
        return Err(LearnError::TooFewConfigurations(n));
    }
    let d = 3 * num_experts;
    let mut mean = vec![0.0; d];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for row in &rows {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in 0..d {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    for r in &mut cov {
        for v in r.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    GeometricModel::new(mean, cov, n)
}

/// Draws one expert configuration from the fitted Gaussian (covariance
/// regularized by `1e-6` on the diagonal), snaps each expert's parameters to
/// the nearest grid transform, and returns the snapped transforms together
/// with the composed template. Deterministic in `rng_seed`.
pub fn sample_placed(
    geometry: &GeometricModel,
    model: &ExpertModel,
    rng_seed: u64,
) -> Result<(Vec<TransformId>, BernoulliTemplate), LearnError> {
    let d = geometry.mean.len();
    if geometry.num_experts() != model.num_experts() {
        return Err(LearnError::InvalidGeometry);
    }
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = geometry.cov[i][j];
        }
        m[(i, i)] += 1e-6;
    }
    let chol = m.cholesky().ok_or(LearnError::DegenerateCovariance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let xi = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let z = DVector::from_column_slice(&geometry.mean) + chol.l() * xi;

    let transforms: Vec<TransformId> = (0..geometry.num_experts())
        .map(|k| model.grid.nearest(z[3 * k], z[3 * k + 1], z[3 * k + 2]))
        .collect();
    let placed: Vec<BernoulliTemplate> = transforms
        .iter()
        .enumerate()
        .map(|(k, &t)| model.transformed(k, t))
        .collect::<Result<_, _>>()?;
    let composed = compose::compose_template(model.rule, &placed)
        .map_err(InferenceError::Compose)?;
    Ok((transforms, composed))
}

/// Composed template of one sampled expert configuration.
pub fn sample_configuration(
    geometry: &GeometricModel,
    model: &ExpertModel,
    rng_seed: u64,
) -> Result<BernoulliTemplate, LearnError> {
    Ok(sample_placed(geometry, model, rng_seed)?.1)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::TransformGrid;

    fn tpl(p: &[f64]) -> BernoulliTemplate {
        BernoulliTemplate::new(p.to_vec()).unwrap()
    }

    fn bits(b: &[u8]) -> BinaryVector {
        BinaryVector::new(b.to_vec()).unwrap()
    }

    fn identity_model(rule: Rule, templates: Vec<BernoulliTemplate>) -> ExpertModel {
        ExpertModel::new(rule, templates, TransformGrid::identity(), 1.0, true).unwrap()
    }

    fn rep_of(model: &ExpertModel, picks: &[usize]) -> Representation {
        Representation {
            picks: picks
                .iter()
                .map(|&k| (k, model.grid.identity_id()))
                .collect(),
            loglik: 0.0,
            trace: vec![0.0],
        }
    }

    #[test]
    fn m_step_direct_substitution() {
        // One expert, identity transforms, data bits {1,1,0} all assigned.
        let model = identity_model(Rule::max_minus_min(), vec![tpl(&[0.9])]);
        let data = vec![bits(&[1]), bits(&[1]), bits(&[0])];
        let reps: Vec<_> = (0..3).map(|_| rep_of(&model, &[0])).collect();
        let out = m_step_batch(&model, &data, &reps, false).unwrap();
        assert!((out.templates[0].probs()[0] - 0.6).abs() < 1e-15);
        assert!((out.counts[0][0] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn m_step_unassigned_cell_behavior() {
        // Template value 0.5 abstains, so nothing is assigned to it.
        let model = identity_model(Rule::max_minus_min(), vec![tpl(&[0.5])]);
        let data = vec![bits(&[1])];
        let reps = vec![rep_of(&model, &[0])];
        let retained = m_step_batch(&model, &data, &reps, false).unwrap();
        assert_eq!(retained.templates[0].probs()[0], 0.5);
        assert_eq!(retained.counts[0][0], 0.0);
        let strict = m_step_batch(&model, &data, &reps, true).unwrap();
        // Literal update: prior mean of Beta(1,1).
        assert_eq!(strict.templates[0].probs()[0], 0.5);
        assert_eq!(strict.counts[0][0], 2.0);

        // A non-abstaining unpicked expert retains its value only in the
        // default mode.
        let model2 = identity_model(
            Rule::max_minus_min(),
            vec![tpl(&[0.9]), tpl(&[0.7])],
        );
        let reps2 = vec![rep_of(&model2, &[0])];
        let retained2 = m_step_batch(&model2, &data, &reps2, false).unwrap();
        assert_eq!(retained2.templates[1].probs()[0], 0.7);
        let strict2 = m_step_batch(&model2, &data, &reps2, true).unwrap();
        assert_eq!(strict2.templates[1].probs()[0], 0.5);
    }

    #[test]
    fn m_step_disjoint_extremal_regions() {
        // Expert 0 votes on at dim 0, expert 1 votes off at dim 1: each
        // update uses only its own region.
        let model = identity_model(
            Rule::max_minus_min(),
            vec![tpl(&[0.9, 0.5]), tpl(&[0.5, 0.1])],
        );
        let data = vec![bits(&[1, 1]), bits(&[0, 0])];
        let reps: Vec<_> = (0..2).map(|_| rep_of(&model, &[0, 1])).collect();
        let out = m_step_batch(&model, &data, &reps, false).unwrap();
        // Expert 0, dim 0: bits 1,0 -> (1+1)/(2+2).
        assert!((out.templates[0].probs()[0] - 0.5).abs() < 1e-15);
        // Expert 0, dim 1 unassigned: retained.
        assert_eq!(out.templates[0].probs()[1], 0.5);
        // Expert 1, dim 1: bits 1,0 -> 0.5; dim 0 retained.
        assert!((out.templates[1].probs()[1] - 0.5).abs() < 1e-15);
        assert_eq!(out.templates[1].probs()[0], 0.5);
        assert_eq!(out.counts[1][1], 4.0);
    }

    #[test]
    fn e_step_perfect_match_and_permutation() {
        let hi = 1.0 - crate::DELTA;
        let lo = crate::DELTA;
        let model = identity_model(
            Rule::max_minus_min(),
            vec![tpl(&[hi, lo]), tpl(&[lo, hi])],
        );
        let data = vec![bits(&[1, 0]), bits(&[0, 1])];
        let reps = e_step(&model, &data).unwrap();
        assert_eq!(reps[0].picks[0].0, 0);
        assert_eq!(reps[1].picks[0].0, 1);
        let swapped = vec![data[1].clone(), data[0].clone()];
        let reps2 = e_step(&model, &swapped).unwrap();
        assert_eq!(reps2[0], reps[1]);
        assert_eq!(reps2[1], reps[0]);
        assert!(e_step(&model, &[]).unwrap().is_empty());
    }

    #[test]
    fn online_update_examples() {
        // First observation wins when the count is zero.
        let mut model = identity_model(Rule::max_minus_min(), vec![tpl(&[0.8])]);
        model.counts = vec![vec![0.0]];
        let rep = rep_of(&model, &[0]);
        let out = online_update(&model, &bits(&[1]), &rep).unwrap();
        assert_eq!(out.templates[0].probs()[0], 1.0);
        assert_eq!(out.counts[0][0], 1.0);

        // N = 3, mu = 0.6, new bit 0 -> 1.8/4.
        let model = identity_model(Rule::max_minus_min(), vec![tpl(&[0.6])])
            .with_counts(vec![vec![3.0]])
            .unwrap();
        let out = online_update(&model, &bits(&[0]), &rep).unwrap();
        assert!((out.templates[0].probs()[0] - 0.45).abs() < 1e-15);
        assert_eq!(out.counts[0][0], 4.0);

        // Unassigned coordinate: bit-identical fields.
        let model = identity_model(Rule::max_minus_min(), vec![tpl(&[0.5])])
            .with_counts(vec![vec![7.0]])
            .unwrap();
        let out = online_update(&model, &bits(&[1]), &rep).unwrap();
        assert_eq!(out.templates[0].probs()[0].to_bits(), 0.5f64.to_bits());
        assert_eq!(out.counts[0][0], 7.0);
    }

    #[test]
    fn init_new_expert_case_split() {
        let model = identity_model(Rule::max_minus_min(), vec![tpl(&[0.9, 0.5])]);
        let rep = rep_of(&model, &[0]);
        let x = bits(&[1, 1]);
        let t = init_new_expert(&model, &x, &rep).unwrap();
        // P(1|0.9) >= P(1|2/3): abstain; P(1|0.5) < 2/3: vote.
        assert_eq!(t.probs()[0], 0.5);
        assert!((t.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn init_new_expert_full_abstention_on_explained_data() {
        let model = identity_model(
            Rule::max_minus_min(),
            vec![tpl(&[0.9, 0.1, 0.9])],
        );
        let rep = rep_of(&model, &[0]);
        let x = bits(&[1, 0, 1]);
        let t = init_new_expert(&model, &x, &rep).unwrap();
        assert!(t.probs().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn init_new_expert_write_black_branch() {
        let model = identity_model(Rule::Max, vec![tpl(&[0.9, 0.1])]);
        let rep = rep_of(&model, &[0]);
        // Dim 0: explained (P(1|0.9) >= 1/2) -> 1/2.
        // Dim 1: unexplained (P(1|0.1) < 1/2) -> 2/3.
        let t = init_new_expert(&model, &bits(&[1, 1]), &rep).unwrap();
        assert_eq!(t.probs()[0], 0.5);
        assert!((t.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn online_matches_batch_average_with_frozen_assignment() {
        use rand::prelude::*;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        // Max-rule model: positive opinions keep the expert assigned at
        // every dimension; the first example is all ones so opinions never
        // hit zero.
        let dim = 12;
        let mut data = vec![bits(&vec![1u8; dim])];
        for _ in 0..19 {
            data.push(
                BinaryVector::new((0..dim).map(|_| rng.random_range(0..=1u8)).collect()).unwrap(),
            );
        }
        // Zero-count start: the online recursion reproduces the plain
        // (epsilon = 0) average.
        let mut model = identity_model(Rule::Max, vec![tpl(&vec![0.3; dim])]);
        model.counts = vec![vec![0.0; dim]];
        let rep = rep_of(&model, &[0]);
        for x in &data {
            model = online_update(&model, x, &rep).unwrap();
        }
        for d in 0..dim {
            let avg: f64 =
                data.iter().map(|x| x.bits()[d] as f64).sum::<f64>() / data.len() as f64;
            assert!((model.templates[0].probs()[d] - avg).abs() < 1e-12);
        }

        // Epsilon-smoothed start from the first example: equals the batch
        // formula with the pseudocount folded in.
        let seed: Vec<f64> = data[0]
            .bits()
            .iter()
            .map(|&b| (b as f64 + 1.0) / 3.0)
            .collect();
        let mut model = identity_model(Rule::Max, vec![tpl(&seed)])
            .with_counts(vec![vec![3.0; dim]])
            .unwrap();
        for x in &data[1..] {
            model = online_update(&model, x, &rep).unwrap();
        }
        let n = data.len() as f64;
        for d in 0..dim {
            let sum: f64 = data.iter().map(|x| x.bits()[d] as f64).sum();
            let expect = (sum + 1.0) / (n + 2.0);
            assert!((model.templates[0].probs()[d] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn train_online_identical_stream_keeps_one_expert() {
        let x = bits(&[1, 1, 0, 0, 1, 0]);
        let data = vec![x.clone(); 8];
        let mut cfg = TrainConfig::new(Rule::max_minus_min(), 4);
        cfg.theta_add = 0.6f64.ln();
        let result = train_online(&data, &cfg).unwrap();
        assert_eq!(result.model.num_experts(), 1);
        // Running masked average: dims seen as 1 keep climbing toward 1.
        let mu = result.model.templates[0].probs();
        for (d, &bit) in x.bits().iter().enumerate() {
            if bit == 1 {
                assert!(mu[d] > 0.8, "dim {d} = {}", mu[d]);
            } else {
                assert!(mu[d] < 0.2, "dim {d} = {}", mu[d]);
            }
        }
    }

    #[test]
    fn train_online_k_max_one_is_a_running_average() {
        use rand::prelude::*;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dim = 9;
        let data: Vec<BinaryVector> = (0..12)
            .map(|_| {
                BinaryVector::new((0..dim).map(|_| rng.random_range(0..=1u8)).collect()).unwrap()
            })
            .collect();
        let cfg = TrainConfig::new(Rule::max_minus_min(), 1);
        let result = train_online(&data, &cfg).unwrap();
        assert_eq!(result.model.num_experts(), 1);
        // With a single expert at the identity transform, every assigned
        // dimension collapses to the smoothed running average of the
        // examples for which the expert was extremal there; verify by
        // replaying the recursion independently.
        let mut mu: Vec<f64> = data[0]
            .bits()
            .iter()
            .map(|&b| (b as f64 + 1.0) / 3.0)
            .collect();
        let mut n = vec![3.0f64; dim];
        for x in &data[1..] {
            for d in 0..dim {
                if mu[d] != 0.5 {
                    mu[d] = (n[d] * mu[d] + x.bits()[d] as f64) / (n[d] + 1.0);
                    n[d] += 1.0;
                }
            }
        }
        for d in 0..dim {
            assert!((result.model.templates[0].probs()[d] - mu[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn train_batch_loglik_is_mostly_nondecreasing() {
        // Hard EM with a heuristic M-step carries no monotonicity
        // guarantee; regressions beyond slack are logged, not fatal.
        let (data, _) = crate::synthetic::gen_quadrant(
            &crate::synthetic::QuadrantModelCfg {
                seed: 2001,
                ..Default::default()
            },
            80,
        )
        .unwrap();
        let mut cfg = TrainConfig::new(Rule::max_minus_min(), 8);
        cfg.epochs = 6;
        let result = train_batch(&data, &cfg).unwrap();
        let mut violations = 0;
        for w in result.epoch_loglik.windows(2) {
            if w[1] < w[0] - 1e-6 {
                violations += 1;
                println!("epoch log-likelihood regressed: {} -> {}", w[0], w[1]);
            }
        }
        assert!(
            result.epoch_loglik.last().unwrap() > result.epoch_loglik.first().unwrap(),
            "no overall improvement: {:?}",
            result.epoch_loglik
        );
        assert!(violations <= 2, "too many regressions: {violations}");
    }

    #[test]
    fn train_batch_zero_epochs_echoes_init() {
        let data = vec![bits(&[1, 0]), bits(&[0, 1])];
        let base = identity_model(Rule::max_minus_min(), vec![tpl(&[0.8, 0.2])]);
        let mut cfg = TrainConfig::new(Rule::max_minus_min(), 1);
        cfg.epochs = 0;
        cfg.init = BatchInit::FromModel(Box::new(base.clone()));
        let result = train_batch(&data, &cfg).unwrap();
        assert_eq!(result.model, base);
        assert!(result.epoch_loglik.is_empty());
    }

    #[test]
    fn fit_geometry_examples() {
        let grid = TransformGrid::new(
            (-4..=4).collect(),
            (-4..=4).collect(),
            vec![0.0],
        )
        .unwrap();
        let pick = |sx: i32, sy: i32| grid.id_of(sx, sy, 0.0).unwrap();
        let rep = |t: TransformId| Representation {
            picks: vec![(0, t)],
            loglik: 0.0,
            trace: vec![0.0],
        };
        // All identity: degenerate Gaussian.
        let reps = vec![rep(pick(0, 0)), rep(pick(0, 0)), rep(pick(0, 0))];
        let g = fit_geometry(&reps, &grid, 1).unwrap();
        assert_eq!(g.mean(), &[0.0, 0.0, 0.0]);
        assert!(g.cov().iter().flatten().all(|&v| v == 0.0));
        assert_eq!(g.sample_count(), 3);

        // Two-point sample: mean 0, variance 8 under the n-1 convention.
        let reps = vec![rep(pick(2, 0)), rep(pick(-2, 0))];
        let g = fit_geometry(&reps, &grid, 1).unwrap();
        assert_eq!(g.mean()[0], 0.0);
        assert_eq!(g.cov()[0][0], 8.0);
        assert_eq!(g.sample_count(), 2);

        // Representations missing an expert are excluded.
        let empty = Representation {
            picks: vec![],
            loglik: 0.0,
            trace: vec![],
        };
        let reps = vec![rep(pick(2, 0)), rep(pick(-2, 0)), empty];
        assert_eq!(fit_geometry(&reps, &grid, 1).unwrap().sample_count(), 2);
        let too_few = vec![rep(pick(0, 0))];
        assert_eq!(
            fit_geometry(&too_few, &grid, 1),
            Err(LearnError::TooFewConfigurations(1))
        );
    }

    #[test]
    fn sampling_with_zero_covariance_is_the_mean_composition() {
        let grid = TransformGrid::new((-4..=4).collect(), (-4..=4).collect(), vec![0.0]).unwrap();
        let mut probs = vec![0.0; 81];
        for x in 0..9 {
            probs[4 * 9 + x] = 0.9;
        }
        let mu = tpl(&probs).with_shape(9, 9).unwrap();
        let model = ExpertModel::new(Rule::Max, vec![mu], grid.clone(), 1.0, true).unwrap();
        let g = GeometricModel::new(vec![2.0, 0.0, 0.0], vec![vec![0.0; 3]; 3], 5).unwrap();
        let (picks, composed) = sample_placed(&g, &model, 123).unwrap();
        assert_eq!(picks, vec![grid.id_of(2, 0, 0.0).unwrap()]);
        let expect = model.transformed(0, picks[0]).unwrap();
        assert_eq!(composed.probs(), expect.probs());
        // Determinism contract.
        let again = sample_placed(&g, &model, 123).unwrap();
        assert_eq!(again.0, picks);
        assert_eq!(again.1, composed);
    }

    #[test]
    fn sampling_then_refitting_recovers_the_gaussian() {
        let grid = TransformGrid::new(
            (-8..=8).collect(),
            (-8..=8).collect(),
            vec![-10.0, 0.0, 10.0],
        )
        .unwrap();
        let mu = tpl(&[0.7; 25]).with_shape(5, 5).unwrap();
        let model =
            ExpertModel::new(Rule::max_minus_min(), vec![mu], grid.clone(), 1.0, true).unwrap();
        let mean = vec![1.0, -2.0, 0.0];
        let cov = vec![
            vec![9.0, 1.0, 0.0],
            vec![1.0, 4.0, 0.0],
            vec![0.0, 0.0, 16.0],
        ];
        let g = GeometricModel::new(mean.clone(), cov.clone(), 100).unwrap();
        let n = 10_000usize;
        let reps: Vec<Representation> = (0..n)
            .map(|i| {
                let (picks, _) = sample_placed(&g, &model, i as u64).unwrap();
                Representation {
                    picks: vec![(0, picks[0])],
                    loglik: 0.0,
                    trace: vec![0.0],
                }
            })
            .collect();
        let refit = fit_geometry(&reps, &grid, 1).unwrap();
        // Shift means recover within 3 standard errors (plus snapping slack).
        for i in 0..2 {
            let se = (cov[i][i] / n as f64).sqrt();
            assert!(
                (refit.mean()[i] - mean[i]).abs() < 3.0 * se + 0.05,
                "component {i}: {} vs {}",
                refit.mean()[i],
                mean[i]
            );
        }
        // PSD within tolerance.
        let d = 3;
        let m = DMatrix::from_fn(d, d, |i, j| refit.cov()[i][j]);
        let eig = m.symmetric_eigenvalues();
        assert!(eig.iter().all(|&v| v > -1e-9));
    }
}
