//! Binary PGM/PPM writers for template and landscape images.
//!
//! Grayscale probability images are P5 with maxval 255 and the linear map
//! `[0,1] -> [0,255]`. Symmetric (write-white-and-black) templates render
//! as P6 with a diverging colormap: 0 is blue, 1/2 gray, 1 yellow, linearly
//! interpolated on each half.

/// `P5` grayscale bytes for row-major probabilities in `[0,1]`.
pub fn pgm_bytes(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| gray(v)));
    out
}

/// `P5` heatmap bytes: values are affinely mapped so the minimum is 0 and
/// the maximum 255 (a constant image maps to 0).
pub fn pgm_heatmap_bytes(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > min { 1.0 / (max - min) } else { 0.0 };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| gray((v - min) * scale)));
    out
}

/// `P6` bytes under the diverging colormap.
pub fn ppm_bytes(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for &v in values {
        out.extend(diverging_rgb(v));
    }
    out
}

fn gray(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Diverging colormap: 0 -> blue (0,0,255), 1/2 -> gray (128,128,128),
/// 1 -> yellow (255,255,0).
pub fn diverging_rgb(p: f64) -> [u8; 3] {
    let p = p.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).round() as u8;
    if p <= 0.5 {
        let t = 2.0 * p;
        [lerp(0.0, 128.0, t), lerp(0.0, 128.0, t), lerp(255.0, 128.0, t)]
    } else {
        let t = 2.0 * p - 1.0;
        [
            lerp(128.0, 255.0, t),
            lerp(128.0, 255.0, t),
            lerp(128.0, 0.0, t),
        ]
    }
}
