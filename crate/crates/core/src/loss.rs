//! Supervised intrinsic loss with analytic gradients.
//!
//! Three plain MSE terms (reflectance, shading, and the product
//! `I - R_hat * S_hat`), each a per-element mean, combined with non-negative
//! weights. Evaluated in f64 so finite-difference checks are meaningful.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageBuffer, ImageError};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("weights must be non-negative with at least one positive, got {0:?}")]
    Weights([f64; 3]),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let w = [self.alpha1, self.alpha2, self.alpha3];
        if w.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) || w.iter().all(|a| *a == 0.0) {
            return Err(LossError::Weights(w));
        }
        Ok(())
    }
}

/// Loss value and gradients with respect to the predictions, flat row-major
/// (reflectance interleaved rgb, shading one value per pixel).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossValue {
    pub total: f64,
    pub l_ref: f64,
    pub l_sha: f64,
    pub l_rs: f64,
    #[serde(skip)]
    pub grad_reflectance: Vec<f64>,
    #[serde(skip)]
    pub grad_shading: Vec<f64>,
}

impl LossValue {
    pub fn grad_reflectance_image(&self, width: usize, height: usize) -> Result<ImageBuffer, ImageError> {
        ImageBuffer::new(width, height, 3, self.grad_reflectance.iter().map(|&g| g as f32).collect())
    }

    pub fn grad_shading_image(&self, width: usize, height: usize) -> Result<ImageBuffer, ImageError> {
        ImageBuffer::new(width, height, 1, self.grad_shading.iter().map(|&g| g as f32).collect())
    }
}

/// Slice form. `image`, `reflectance` and `pred_reflectance` hold `3n` values,
/// `shading` and `pred_shading` hold `n`.
pub fn intrinsic_loss_slices(
    image: &[f64],
    reflectance: &[f64],
    shading: &[f64],
    pred_reflectance: &[f64],
    pred_shading: &[f64],
    weights: &LossWeights,
) -> Result<LossValue, LossError> {
    weights.validate()?;
    let n = shading.len();
    if n == 0 {
        return Err(LossError::Shape("empty input".into()));
    }
    for (name, len, want) in [
        ("image", image.len(), 3 * n),
        ("reflectance", reflectance.len(), 3 * n),
        ("predicted reflectance", pred_reflectance.len(), 3 * n),
        ("predicted shading", pred_shading.len(), n),
    ] {
        if len != want {
            return Err(LossError::Shape(format!("{name} has {len} values, expected {want}")));
        }
    }
    let n3 = (3 * n) as f64;
    let nf = n as f64;
    let (w1, w2, w3) = (weights.alpha1, weights.alpha2, weights.alpha3);
    let mut grad_r = vec![0.0; 3 * n];
    let mut grad_s = vec![0.0; n];
    let (mut l_ref, mut l_sha, mut l_rs) = (0.0, 0.0, 0.0);
    for p in 0..n {
        let s_hat = pred_shading[p];
        let ds = shading[p] - s_hat;
        l_sha += ds * ds;
        grad_s[p] = -2.0 * w2 * ds / nf;
        for c in 0..3 {
            let i = 3 * p + c;
            let r_hat = pred_reflectance[i];
            let dr = reflectance[i] - r_hat;
            let e = image[i] - r_hat * s_hat;
            l_ref += dr * dr;
            l_rs += e * e;
            grad_r[i] = (-2.0 * w1 * dr - 2.0 * w3 * e * s_hat) / n3;
            grad_s[p] += -2.0 * w3 * e * r_hat / n3;
        }
    }
    let (l_ref, l_sha, l_rs) = (l_ref / n3, l_sha / nf, l_rs / n3);
    Ok(LossValue {
        total: w1 * l_ref + w2 * l_sha + w3 * l_rs,
        l_ref,
        l_sha,
        l_rs,
        grad_reflectance: grad_r,
        grad_shading: grad_s,
    })
}

fn widen(img: &ImageBuffer) -> Vec<f64> {
    img.data().iter().map(|&v| v as f64).collect()
}

/// Image form: ground truth `(image, reflectance, shading)`, predictions
/// `(pred_reflectance, pred_shading)`.
pub fn intrinsic_loss(
    image: &ImageBuffer,
    reflectance: &ImageBuffer,
    shading: &ImageBuffer,
    pred_reflectance: &ImageBuffer,
    pred_shading: &ImageBuffer,
    weights: &LossWeights,
) -> Result<LossValue, LossError> {
    for (name, img, channels) in [
        ("image", image, 3),
        ("reflectance", reflectance, 3),
        ("shading", shading, 1),
        ("predicted reflectance", pred_reflectance, 3),
        ("predicted shading", pred_shading, 1),
    ] {
        if img.channels() != channels {
            return Err(LossError::Shape(format!("{name} has {} channels, expected {channels}", img.channels())));
        }
        if !img.same_size(image) {
            return Err(LossError::Shape(format!(
                "{name} is {}x{}, image is {}x{}",
                img.width(),
                img.height(),
                image.width(),
                image.height()
            )));
        }
    }
    intrinsic_loss_slices(
        &widen(image),
        &widen(reflectance),
        &widen(shading),
        &widen(pred_reflectance),
        &widen(pred_shading),
        weights,
    )
}
