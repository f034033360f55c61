//! The synthetic quadrant model: a square binary image divided into four
//! quadrants, each independently either constant (black or white) or pure
//! coin-flip noise. Its eight ground-truth experts are the four quadrants
//! in both polarities.

use super::{stream_rng, SyntheticError};
use crate::compose::{self, Rule};
use crate::likelihood::{log_likelihood, BernoulliTemplate, BinaryVector};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantModelCfg {
    /// Image side in pixels; even and at least 2.
    pub side: usize,
    /// Probability that a quadrant is constant rather than noise.
    pub activation_prob: f64,
    /// Probability that a constant quadrant is black.
    pub polarity_prob: f64,
    pub seed: u64,
}

impl Default for QuadrantModelCfg {
    fn default() -> Self {
        QuadrantModelCfg {
            side: 6,
            activation_prob: 0.5,
            polarity_prob: 0.5,
            seed: 0,
        }
    }
}

impl QuadrantModelCfg {
    fn validate(&self) -> Result<(), SyntheticError> {
        if self.side < 2 || self.side % 2 != 0 {
            return Err(SyntheticError::InvalidConfig(format!(
                "side must be even and >= 2, got {}",
                self.side
            )));
        }
        for p in [self.activation_prob, self.polarity_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SyntheticError::InvalidConfig(format!(
                    "probability {p} outside [0,1]"
                )));
            }
        }
        Ok(())
    }

    /// Row-major pixel indices of quadrant `q` (0 = top-left, 1 = top-right,
    /// 2 = bottom-left, 3 = bottom-right).
    fn quadrant_dims(&self, q: usize) -> Vec<usize> {
        let half = self.side / 2;
        let (row0, col0) = (q / 2 * half, q % 2 * half);
        let mut dims = Vec::with_capacity(half * half);
        for r in row0..row0 + half {
            for c in col0..col0 + half {
                dims.push(r * self.side + c);
            }
        }
        dims
    }

    /// The eight ground-truth experts: for each quadrant in row-major order,
    /// first the black expert (1 on the quadrant) then the white expert
    /// (0 on the quadrant), abstaining at 1/2 everywhere else.
    pub fn ground_truth(&self) -> Vec<BernoulliTemplate> {
        let dim = self.side * self.side;
        let mut out = Vec::with_capacity(8);
        for q in 0..4 {
            for polarity in [1.0f64, 0.0f64] {
                let mut probs = vec![0.5; dim];
                for &d in &self.quadrant_dims(q) {
                    probs[d] = polarity;
                }
                out.push(
                    BernoulliTemplate::new(probs)
                        .expect("in range")
                        .with_shape(self.side, self.side)
                        .expect("square"),
                );
            }
        }
        out
    }
}

/// Draws `n` samples. Sample `i` uses ChaCha stream `i`; within a sample the
/// draw order is: per quadrant (row-major) an activation coin, then either
/// one polarity coin or one coin per pixel (row-major within the quadrant).
pub fn gen_quadrant(
    cfg: &QuadrantModelCfg,
    n: usize,
) -> Result<(Vec<BinaryVector>, Vec<BernoulliTemplate>), SyntheticError> {
    cfg.validate()?;
    if n == 0 {
        return Err(SyntheticError::InvalidConfig("n must be >= 1".into()));
    }
    let dim = cfg.side * cfg.side;
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(cfg.seed, i as u64);
        let mut bits = vec![0u8; dim];
        for q in 0..4 {
            let dims = cfg.quadrant_dims(q);
            if rng.random_bool(cfg.activation_prob) {
                let value = rng.random_bool(cfg.polarity_prob) as u8;
                for d in dims {
                    bits[d] = value;
                }
            } else {
                for d in dims {
                    bits[d] = rng.random_bool(0.5) as u8;
                }
            }
        }
        data.push(
            BinaryVector::new(bits)?
                .with_shape(cfg.side, cfg.side)?,
        );
    }
    Ok((data, cfg.ground_truth()))
}

/// Monte Carlo estimate (and standard error) of the expected cross-entropy
/// of the ground-truth model in nats per image.
///
/// For each sampled image the best composition is chosen by exact
/// enumeration of the `3^4` per-quadrant expert choices (black, white, or
/// none) under the max-minus-min rule.
pub fn ground_truth_cross_entropy(
    cfg: &QuadrantModelCfg,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64), SyntheticError> {
    cfg.validate()?;
    if n_mc < 1 {
        return Err(SyntheticError::InvalidConfig("n_mc must be >= 1".into()));
    }
    let sample_cfg = QuadrantModelCfg {
        seed,
        ..cfg.clone()
    };
    let (data, truth) = gen_quadrant(&sample_cfg, n_mc)?;
    let compositions = enumerate_quadrant_compositions(cfg, &truth)?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for x in &data {
        let ce = -best_composition_loglik(x, &compositions)?;
        sum += ce;
        sum_sq += ce * ce;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = if n_mc > 1 {
        (sum_sq - n * mean * mean).max(0.0) / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

/// All `3^4` composed templates of per-quadrant expert choices.
pub(crate) fn enumerate_quadrant_compositions(
    cfg: &QuadrantModelCfg,
    truth: &[BernoulliTemplate],
) -> Result<Vec<BernoulliTemplate>, SyntheticError> {
    let dim = cfg.side * cfg.side;
    let rule = Rule::max_minus_min();
    let mut out = Vec::with_capacity(81);
    for choice in 0..81usize {
        let mut selected = Vec::new();
        let mut c = choice;
        for q in 0..4 {
            match c % 3 {
                0 => {}
                1 => selected.push(truth[2 * q].clone()),
                2 => selected.push(truth[2 * q + 1].clone()),
                _ => unreachable!(),
            }
            c /= 3;
        }
        let composed = if selected.is_empty() {
            BernoulliTemplate::filled(0.5, dim, Some((cfg.side, cfg.side)))
        } else {
            compose::compose_template(rule, &selected)?
        };
        out.push(composed);
    }
    Ok(out)
}

pub(crate) fn best_composition_loglik(
    x: &BinaryVector,
    compositions: &[BernoulliTemplate],
) -> Result<f64, SyntheticError> {
    let mut best = f64::NEG_INFINITY;
    for composed in compositions {
        best = best.max(log_likelihood(x, composed)?);
    }
    Ok(best)
}
