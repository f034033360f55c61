//! Discrete shift/rotation transforms on image-shaped templates and data.
//!
//! A [`TransformGrid`] is the product set of x-shifts, y-shifts and rotation
//! angles an expert may appear under. Transforms are enumerated row-major
//! over `rotations × shifts_y × shifts_x`, and that enumeration order is the
//! stable meaning of a [`TransformId`].
//!
//! The forward direction places a template into the observation frame:
//! rotate about the geometric image center `((W-1)/2, (H-1)/2)` with
//! nearest-neighbor resampling, then shift; uncovered destination pixels
//! take a caller-supplied fill value (the model's abstention value). The
//! inverse direction pulls observed data back into the template frame and
//! reports a mask of template coordinates whose forward-mapped location
//! falls inside the image.

use crate::likelihood::{BernoulliTemplate, BinaryVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("transform grid axes must be nonempty")]
    EmptyAxis,
    #[error("transform grid must contain the identity (0, 0, 0°)")]
    MissingIdentity,
    #[error("duplicate grid entry on one axis")]
    DuplicateEntry,
    #[error("transform id {0} out of range for grid of size {1}")]
    IdOutOfRange(usize, usize),
    #[error("image-shaped input required")]
    ShapelessInput,
}

/// Index into a grid's transform enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransformId(pub usize);

/// Decoded transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    pub shift_x: i32,
    pub shift_y: i32,
    /// Rotation angle in degrees, applied before the shift.
    pub rotation: f64,
}

/// The discrete set of transforms `Φ_t` over an image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGrid {
    shifts_x: Vec<i32>,
    shifts_y: Vec<i32>,
    rotations: Vec<f64>,
}

impl TransformGrid {
    pub fn new(
        shifts_x: Vec<i32>,
        shifts_y: Vec<i32>,
        rotations: Vec<f64>,
    ) -> Result<Self, TransformError> {
        if shifts_x.is_empty() || shifts_y.is_empty() || rotations.is_empty() {
            return Err(TransformError::EmptyAxis);
        }
        if !shifts_x.contains(&0) || !shifts_y.contains(&0) || !rotations.contains(&0.0) {
            return Err(TransformError::MissingIdentity);
        }
        if has_duplicates_i32(&shifts_x)
            || has_duplicates_i32(&shifts_y)
            || has_duplicates_f64(&rotations)
        {
            return Err(TransformError::DuplicateEntry);
        }
        Ok(TransformGrid {
            shifts_x,
            shifts_y,
            rotations,
        })
    }

    /// The single-transform grid containing only the identity.
    pub fn identity() -> Self {
        TransformGrid {
            shifts_x: vec![0],
            shifts_y: vec![0],
            rotations: vec![0.0],
        }
    }

    /// Default deformation grid for letter-sized (56x56) images: shifts
    /// -8..=8 in steps of 2 on both axes, rotations -20°..=20° in steps
    /// of 10°.
    pub fn letter() -> Self {
        let shifts: Vec<i32> = (-4..=4).map(|s| 2 * s).collect();
        TransformGrid::new(
            shifts.clone(),
            shifts,
            vec![-20.0, -10.0, 0.0, 10.0, 20.0],
        )
        .expect("letter grid is valid")
    }

    pub fn shifts_x(&self) -> &[i32] {
        &self.shifts_x
    }

    pub fn shifts_y(&self) -> &[i32] {
        &self.shifts_y
    }

    pub fn rotations(&self) -> &[f64] {
        &self.rotations
    }

    /// Number of transforms in the enumeration.
    pub fn len(&self) -> usize {
        self.rotations.len() * self.shifts_y.len() * self.shifts_x.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ids(&self) -> impl Iterator<Item = TransformId> {
        (0..self.len()).map(TransformId)
    }

    /// Decodes an id into its parameters (row-major over
    /// rotations × shifts_y × shifts_x).
    pub fn params(&self, t: TransformId) -> Result<TransformParams, TransformError> {
        if t.0 >= self.len() {
            return Err(TransformError::IdOutOfRange(t.0, self.len()));
        }
        let sx = t.0 % self.shifts_x.len();
        let rest = t.0 / self.shifts_x.len();
        let sy = rest % self.shifts_y.len();
        let rot = rest / self.shifts_y.len();
        Ok(TransformParams {
            shift_x: self.shifts_x[sx],
            shift_y: self.shifts_y[sy],
            rotation: self.rotations[rot],
        })
    }

    /// Id of the identity transform.
    pub fn identity_id(&self) -> TransformId {
        self.id_of(0, 0, 0.0).expect("grids contain the identity")
    }

    /// Exact lookup of a transform id by parameters.
    pub fn id_of(&self, shift_x: i32, shift_y: i32, rotation: f64) -> Option<TransformId> {
        let sx = self.shifts_x.iter().position(|&v| v == shift_x)?;
        let sy = self.shifts_y.iter().position(|&v| v == shift_y)?;
        let rot = self.rotations.iter().position(|&v| v == rotation)?;
        Some(TransformId(
            (rot * self.shifts_y.len() + sy) * self.shifts_x.len() + sx,
        ))
    }

    /// Snaps real-valued parameters to the nearest grid transform,
    /// per axis; ties resolve to the earlier entry of the axis vector.
    pub fn nearest(&self, shift_x: f64, shift_y: f64, rotation: f64) -> TransformId {
        let sx = nearest_index(self.shifts_x.iter().map(|&v| v as f64), shift_x);
        let sy = nearest_index(self.shifts_y.iter().map(|&v| v as f64), shift_y);
        let rot = nearest_index(self.rotations.iter().copied(), rotation);
        TransformId((rot * self.shifts_y.len() + sy) * self.shifts_x.len() + sx)
    }
}

fn nearest_index(values: impl Iterator<Item = f64>, target: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, v) in values.enumerate() {
        let d = (v - target).abs();
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    best
}

fn has_duplicates_i32(v: &[i32]) -> bool {
    let mut sorted = v.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).any(|w| w[0] == w[1])
}

fn has_duplicates_f64(v: &[f64]) -> bool {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// For each template coordinate, the observation-frame index it lands on
/// under the forward transform (rotate about the center, then shift), or
/// `None` when it falls outside the image.
pub(crate) fn forward_map(
    params: TransformParams,
    h: usize,
    w: usize,
) -> Vec<Option<usize>> {
    let theta = params.rotation.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut map = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let fx = (dx * cos - dy * sin + cx).round() as i64 + params.shift_x as i64;
            let fy = (dx * sin + dy * cos + cy).round() as i64 + params.shift_y as i64;
            if fx >= 0 && fx < w as i64 && fy >= 0 && fy < h as i64 {
                map.push(Some(fy as usize * w + fx as usize));
            } else {
                map.push(None);
            }
        }
    }
    map
}

/// Applies `Φ_t` to a template: rotation about the image center
/// (nearest-neighbor), then shift. Destination pixels with no source take
/// the `fill` value — 0 for write-black models, 1/2 for symmetric ones.
pub fn apply(
    grid: &TransformGrid,
    t: TransformId,
    mu: &BernoulliTemplate,
    fill: f64,
) -> Result<BernoulliTemplate, TransformError> {
    let (h, w) = mu.shape().ok_or(TransformError::ShapelessInput)?;
    let params = grid.params(t)?;
    let out = apply_raw(params, mu.probs(), h, w, fill);
    Ok(BernoulliTemplate::new(out)
        .expect("transformed probabilities stay in range")
        .with_shape(h, w)
        .expect("shape preserved"))
}

pub(crate) fn apply_raw(
    params: TransformParams,
    src: &[f64],
    h: usize,
    w: usize,
    fill: f64,
) -> Vec<f64> {
    let theta = params.rotation.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = vec![fill; h * w];
    for y in 0..h {
        for x in 0..w {
            // Undo the shift, then rotate backwards to find the source.
            let xr = x as i64 - params.shift_x as i64;
            let yr = y as i64 - params.shift_y as i64;
            let dx = xr as f64 - cx;
            let dy = yr as f64 - cy;
            let sx = (dx * cos + dy * sin + cx).round() as i64;
            let sy = (-dx * sin + dy * cos + cy).round() as i64;
            if sx >= 0 && sx < w as i64 && sy >= 0 && sy < h as i64 {
                out[y * w + x] = src[sy as usize * w + sx as usize];
            }
        }
    }
    out
}

/// Pulls observed data back into the template frame: inverse shift, then
/// inverse rotation. Returns the pulled-back bits and a mask; `mask[d] = 1`
/// means template coordinate `d` has a preimage inside the image and the
/// returned bit equals the observed pixel at its forward-mapped location.
/// Bits at masked-out coordinates are 0 and must be ignored.
pub fn apply_inverse_to_data(
    grid: &TransformGrid,
    t: TransformId,
    x: &BinaryVector,
) -> Result<(BinaryVector, Vec<u8>), TransformError> {
    let (h, w) = x.shape().ok_or(TransformError::ShapelessInput)?;
    let params = grid.params(t)?;
    let map = forward_map(params, h, w);
    let mut bits = vec![0u8; h * w];
    let mut mask = vec![0u8; h * w];
    for (d, entry) in map.iter().enumerate() {
        if let Some(obs) = entry {
            bits[d] = x.bits()[*obs];
            mask[d] = 1;
        }
    }
    let pulled = BinaryVector::new(bits)
        .expect("bit values preserved")
        .with_shape(h, w)
        .expect("shape preserved");
    Ok((pulled, mask))
}
