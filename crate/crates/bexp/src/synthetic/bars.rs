//! Jittered two-bar images: every sample is the union of one horizontal and
//! one vertical bar, each independently shifted and rotated, drawn with ink
//! and background noise. The stand-in for handwritten-letter data when
//! exercising online learning and the geometric component: like a letter's
//! stem, the vertical bar is the large stable anchor, while the smaller
//! horizontal bar slides against it.

use super::{stream_rng, SyntheticError};
use crate::likelihood::{BernoulliTemplate, BinaryVector};
use crate::transform::{self, TransformParams};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BarLetterCfg {
    pub canvas: (usize, usize),
    /// Length and thickness of the horizontal bar.
    pub h_length: usize,
    pub h_thickness: usize,
    /// Length and thickness of the vertical (anchor) bar.
    pub v_length: usize,
    pub v_thickness: usize,
    /// Admissible `(shift_x, shift_y)` offsets for the horizontal bar.
    pub shift_jitter_h: Vec<(i32, i32)>,
    /// Admissible `(shift_x, shift_y)` offsets for the vertical bar.
    pub shift_jitter_v: Vec<(i32, i32)>,
    /// Admissible rotation angles in degrees, drawn independently per bar.
    pub rotation_jitter: Vec<f64>,
    pub ink_prob: f64,
    pub background_prob: f64,
    pub seed: u64,
}

impl Default for BarLetterCfg {
    fn default() -> Self {
        BarLetterCfg {
            canvas: (56, 56),
            h_length: 44,
            h_thickness: 3,
            v_length: 46,
            v_thickness: 10,
            shift_jitter_h: vec![(-4, 0), (0, 0), (4, 0)],
            shift_jitter_v: vec![(-2, 0), (0, 0), (2, 0)],
            rotation_jitter: vec![-10.0, 0.0, 10.0],
            ink_prob: 0.98,
            background_prob: 0.005,
            seed: 0,
        }
    }
}

impl BarLetterCfg {
    fn validate(&self) -> Result<(), SyntheticError> {
        let (h, w) = self.canvas;
        for (len, th) in [
            (self.h_length, self.h_thickness),
            (self.v_length, self.v_thickness),
        ] {
            if len == 0 || th == 0 {
                return Err(SyntheticError::InvalidConfig(
                    "bar length and thickness must be positive".into(),
                ));
            }
            if len > w.min(h) {
                return Err(SyntheticError::InvalidConfig(
                    "bar does not fit the canvas".into(),
                ));
            }
        }
        if self.shift_jitter_h.is_empty()
            || self.shift_jitter_v.is_empty()
            || self.rotation_jitter.is_empty()
        {
            return Err(SyntheticError::InvalidConfig(
                "jitter sets must be nonempty".into(),
            ));
        }
        for p in [self.ink_prob, self.background_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SyntheticError::InvalidConfig(format!(
                    "probability {p} outside [0,1]"
                )));
            }
        }
        // Bars must stay inside the canvas under every jitter combination:
        // push each support pixel through the forward map and require an
        // in-bounds destination.
        for (support, jitter) in [
            (self.horizontal_support(), &self.shift_jitter_h),
            (self.vertical_support(), &self.shift_jitter_v),
        ] {
            for &(jx, jy) in jitter {
                for &rot in &self.rotation_jitter {
                    let params = TransformParams {
                        shift_x: jx,
                        shift_y: jy,
                        rotation: rot,
                    };
                    let fmap = transform::forward_map(params, h, w);
                    for (d, &on) in support.iter().enumerate() {
                        if on && fmap[d].is_none() {
                            return Err(SyntheticError::InvalidConfig(format!(
                                "bar leaves the canvas under jitter ({jx},{jy},{rot})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn horizontal_support(&self) -> Vec<bool> {
        let (h, w) = self.canvas;
        let row0 = (h - self.h_thickness) / 2;
        let col0 = (w - self.h_length) / 2;
        let mut s = vec![false; h * w];
        for r in row0..row0 + self.h_thickness {
            for c in col0..col0 + self.h_length {
                s[r * w + c] = true;
            }
        }
        s
    }

    fn vertical_support(&self) -> Vec<bool> {
        let (h, w) = self.canvas;
        let row0 = (h - self.v_length) / 2;
        let col0 = (w - self.v_thickness) / 2;
        let mut s = vec![false; h * w];
        for r in row0..row0 + self.v_length {
            for c in col0..col0 + self.v_thickness {
                s[r * w + c] = true;
            }
        }
        s
    }

    /// The two un-jittered ground-truth templates, horizontal first.
    pub fn ground_truth(&self) -> Vec<BernoulliTemplate> {
        let (h, w) = self.canvas;
        [self.horizontal_support(), self.vertical_support()]
            .into_iter()
            .map(|support| {
                let probs = support
                    .iter()
                    .map(|&on| if on { self.ink_prob } else { self.background_prob })
                    .collect();
                BernoulliTemplate::new(probs)
                    .expect("in range")
                    .with_shape(h, w)
                    .expect("canvas shape")
            })
            .collect()
    }
}

/// Draws `n` samples. Sample `i` uses ChaCha stream `i`; the draw order is
/// horizontal-bar jitter (x index, y index, rotation index), vertical-bar
/// jitter, then one ink/background coin per pixel, row-major.
pub fn gen_bars(
    cfg: &BarLetterCfg,
    n: usize,
) -> Result<(Vec<BinaryVector>, Vec<BernoulliTemplate>), SyntheticError> {
    cfg.validate()?;
    if n < 2 {
        return Err(SyntheticError::InvalidConfig("n must be >= 2".into()));
    }
    let (h, w) = cfg.canvas;
    let supports = [
        (cfg.horizontal_support(), &cfg.shift_jitter_h),
        (cfg.vertical_support(), &cfg.shift_jitter_v),
    ];
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(cfg.seed, i as u64);
        let mut on = vec![false; h * w];
        for (support, jitter) in &supports {
            let (jx, jy) = jitter[rng.random_range(0..jitter.len())];
            let rot = cfg.rotation_jitter[rng.random_range(0..cfg.rotation_jitter.len())];
            let params = TransformParams {
                shift_x: jx,
                shift_y: jy,
                rotation: rot,
            };
            let src: Vec<f64> = support.iter().map(|&b| b as u8 as f64).collect();
            let moved = transform::apply_raw(params, &src, h, w, 0.0);
            for (dst, &v) in on.iter_mut().zip(&moved) {
                if v >= 0.5 {
                    *dst = true;
                }
            }
        }
        let bits: Vec<u8> = on
            .iter()
            .map(|&covered| {
                let p = if covered { cfg.ink_prob } else { cfg.background_prob };
                rng.random_bool(p) as u8
            })
            .collect();
        data.push(BinaryVector::new(bits)?.with_shape(h, w)?);
    }
    Ok((data, cfg.ground_truth()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_config_yields_identical_samples() {
        let cfg = BarLetterCfg {
            shift_jitter_h: vec![(0, 0)],
            shift_jitter_v: vec![(0, 0)],
            rotation_jitter: vec![0.0],
            ink_prob: 1.0,
            background_prob: 0.0,
            seed: 3,
            ..Default::default()
        };
        let (data, truth) = gen_bars(&cfg, 4).unwrap();
        for x in &data[1..] {
            assert_eq!(x, &data[0]);
        }
        // The sample equals the union of the two ground-truth supports.
        for (d, &bit) in data[0].bits().iter().enumerate() {
            let on = truth[0].probs()[d] == 1.0 || truth[1].probs()[d] == 1.0;
            assert_eq!(bit == 1, on, "dim {d}");
        }
    }

    #[test]
    fn seed_determinism() {
        let cfg = BarLetterCfg {
            seed: 12,
            ..Default::default()
        };
        assert_eq!(gen_bars(&cfg, 6).unwrap().0, gen_bars(&cfg, 6).unwrap().0);
    }

    #[test]
    fn on_bar_pixel_rate_matches_ink_probability() {
        let cfg = BarLetterCfg {
            shift_jitter_h: vec![(0, 0)],
            shift_jitter_v: vec![(0, 0)],
            rotation_jitter: vec![0.0],
            seed: 8,
            ..Default::default()
        };
        let (data, _) = gen_bars(&cfg, 50).unwrap();
        let support = cfg.horizontal_support();
        let mut on = 0usize;
        let mut total = 0usize;
        for x in &data {
            for (d, &s) in support.iter().enumerate() {
                if s {
                    total += 1;
                    on += x.bits()[d] as usize;
                }
            }
        }
        let ink = cfg.ink_prob;
        let rate = on as f64 / total as f64;
        let sigma = (ink * (1.0 - ink) / total as f64).sqrt();
        assert!((rate - ink).abs() < 4.0 * sigma, "ink rate {rate}");
    }

    #[test]
    fn overflowing_jitter_is_rejected() {
        let cfg = BarLetterCfg {
            v_length: 52,
            shift_jitter_v: vec![(-8, -8), (0, 0), (8, 8)],
            ..Default::default()
        };
        assert!(matches!(
            gen_bars(&cfg, 4),
            Err(SyntheticError::InvalidConfig(_))
        ));
    }
}
