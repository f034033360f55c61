//! Expected per-pixel log-likelihood landscape of a two-expert model whose
//! experts are constant templates `p1`, `p2`, evaluated analytically in the
//! large-image limit.
//!
//! The generating mixture produces all-black images with probability 1/4,
//! all-white images with probability 1/4, and coin-flip noise with
//! probability 1/2. For each image type the best expert subset (of the four
//! subsets of two experts) is selected analytically, so the landscape is
//! noise-free.

use super::SyntheticError;
use crate::compose::{self, Rule};
use crate::DELTA;

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    /// Grid coordinates shared by both axes: `round(1/step) - 1` points
    /// spanning `[DELTA, 1 - DELTA]`.
    pub axis: Vec<f64>,
    /// Row-major values: `values[i * n + j]` is the expected per-pixel
    /// log-likelihood at `(p1, p2) = (axis[i], axis[j])`.
    pub values: Vec<f64>,
}

impl Landscape {
    pub fn n(&self) -> usize {
        self.axis.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// All grid points attaining the maximum within `1e-12`.
    pub fn argmax_points(&self) -> Vec<(f64, f64)> {
        let max = self.max_value();
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if max - self.values[i * n + j] <= 1e-12 {
                    out.push((self.axis[i], self.axis[j]));
                }
            }
        }
        out
    }
}

#[inline]
fn clip(p: f64) -> f64 {
    p.clamp(DELTA, 1.0 - DELTA)
}

/// Expected per-pixel log-likelihood at one parameter point, maximizing
/// over the expert subsets `{}, {1}, {2}, {1,2}` separately for each image
/// type.
pub fn landscape_value(rule: Rule, p1: f64, p2: f64) -> f64 {
    let subsets: [&[f64]; 4] = [&[], &[p1], &[p2], &[p1, p2]];
    let mut best_black = f64::NEG_INFINITY;
    let mut best_white = f64::NEG_INFINITY;
    let mut best_random = f64::NEG_INFINITY;
    for subset in subsets {
        if subset.is_empty() && rule.abstention().is_none() {
            continue;
        }
        let c = clip(compose::compose_slice_unchecked(rule, subset));
        let ln_on = c.ln();
        let ln_off = (1.0 - c).ln();
        best_black = best_black.max(ln_on);
        best_white = best_white.max(ln_off);
        best_random = best_random.max(0.5 * (ln_on + ln_off));
    }
    0.25 * best_black + 0.25 * best_white + 0.5 * best_random
}

/// Evaluates the landscape on a square grid with spacing `grid_step`
/// (in `(0, 0.1]`).
pub fn landscape(rule: Rule, grid_step: f64) -> Result<Landscape, SyntheticError> {
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(SyntheticError::InvalidConfig(format!(
            "grid_step {grid_step} outside (0, 0.1]"
        )));
    }
    let n = (1.0 / grid_step).round() as usize - 1;
    if n < 2 {
        return Err(SyntheticError::InvalidConfig(
            "grid_step too coarse".into(),
        ));
    }
    let lo = DELTA;
    let hi = 1.0 - DELTA;
    let axis: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            values.push(landscape_value(rule, axis[i], axis[j]));
        }
    }
    Ok(Landscape { axis, values })
}
