//! Random rotation, translation and horizontal flip of single images.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    /// Fraction of the image extent, applied independently per axis.
    pub max_translate_frac: f64,
    pub hflip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { max_rotation_deg: 20.0, max_translate_frac: 0.1, hflip: true }
    }
}

/// Flip, then rotate about the image centre, then translate (pixels).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    pub rotation_deg: f64,
    pub translate_x: f64,
    pub translate_y: f64,
    pub flip: bool,
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self { rotation_deg: 0.0, translate_x: 0.0, translate_y: 0.0, flip: false }
    }

    pub fn sample(rng: &mut SeededRng, config: &AugmentConfig, height: usize, width: usize) -> Self {
        let uniform = |rng: &mut SeededRng, half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
        let rotation_deg = uniform(rng, config.max_rotation_deg);
        let translate_x = uniform(rng, config.max_translate_frac * width as f64);
        let translate_y = uniform(rng, config.max_translate_frac * height as f64);
        let flip = config.hflip && rng.random_bool(0.5);
        Self { rotation_deg, translate_x, translate_y, flip }
    }

    /// Resamples an `H×W×C` image bilinearly. Coordinates falling outside the
    /// source replicate the nearest edge pixel.
    pub fn apply(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (h, w, c) = match image.shape() {
            [h, w, c] => (*h, *w, *c),
            s => return Err(Error::ShapeMismatch { op: "augment", left: s.to_vec(), right: vec![] }),
        };
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        let src = image.data();
        let mut out = Vec::with_capacity(image.len());
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - self.translate_x - cx;
                let dy = y as f64 - self.translate_y - cy;
                let mut sx = cx + cos * dx + sin * dy;
                let sy = cy - sin * dx + cos * dy;
                if self.flip {
                    sx = w as f64 - 1.0 - sx;
                }
                let sx = sx.clamp(0.0, w as f64 - 1.0);
                let sy = sy.clamp(0.0, h as f64 - 1.0);
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                for ch in 0..c {
                    let at = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch] as f64;
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    let v = top * (1.0 - fy) + bottom * fy;
                    out.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
        Tensor::from_data(image.shape(), out)
    }
}

/// Applies a randomly sampled transform to an image with values in [0, 1].
pub fn augment(image: &Tensor<f32>, rng: &mut SeededRng, config: &AugmentConfig) -> Result<Tensor<f32>> {
    let (h, w) = match image.shape() {
        [h, w, _] => (*h, *w),
        s => return Err(Error::ShapeMismatch { op: "augment", left: s.to_vec(), right: vec![] }),
    };
    AffineTransform::sample(rng, config, h, w).apply(image)
}
