//! Chromaticity rotation of reflectance about the gray axis.
//!
//! Linear RGB, Rodrigues rotation about (1,1,1)/sqrt(3), clamp to [0,1].
//! Shading is kept bit for bit and the image is recomposed from it.

use std::f64::consts::PI;

use thiserror::Error;

use crate::image::{multiply_broadcast, ImageBuffer, ImageError, IntrinsicTriple};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("rotation angle {0} outside [-pi, pi]")]
    Angle(f64),
    #[error("reflectance must have 3 channels")]
    Channels,
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Rotation matrix about the achromatic axis.
pub fn gray_axis_rotation(angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let k = 1.0 / 3.0_f64.sqrt();
    let t = 1.0 - c;
    // R = cI + s[k]x + t kk^T with k = (1,1,1)/sqrt(3), so kk^T = 1/3 everywhere
    let diag = c + t / 3.0;
    let plus = t / 3.0 + s * k;
    let minus = t / 3.0 - s * k;
    [[diag, minus, plus], [plus, diag, minus], [minus, plus, diag]]
}

/// Rotates one rgb triple without clamping.
pub fn rotate_rgb(rgb: [f64; 3], angle: f64) -> [f64; 3] {
    let m = gray_axis_rotation(angle);
    [0, 1, 2].map(|r| m[r][0] * rgb[0] + m[r][1] * rgb[1] + m[r][2] * rgb[2])
}

#[derive(Clone, Debug)]
pub struct AugmentedTriple {
    pub triple: IntrinsicTriple,
    /// Whether any reflectance channel had to be clamped into [0,1].
    pub clamped: bool,
    pub clamped_pixels: usize,
}

/// Rotates a reflectance image; returns the clamped result and the number
/// of pixels that needed clamping.
pub fn rotate_reflectance(reflectance: &ImageBuffer, angle: f64) -> Result<(ImageBuffer, usize), AugmentError> {
    if !(angle.abs() <= PI) {
        return Err(AugmentError::Angle(angle));
    }
    if reflectance.channels() != 3 {
        return Err(AugmentError::Channels);
    }
    let m = gray_axis_rotation(angle);
    let mut out = Vec::with_capacity(reflectance.data().len());
    let mut clamped = 0;
    for px in reflectance.data().chunks_exact(3) {
        let v = [px[0] as f64, px[1] as f64, px[2] as f64];
        let mut hit = false;
        for row in &m {
            let x = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
            let y = x.clamp(0.0, 1.0);
            // round-off around the cube faces is not a real clamp
            if (x - y).abs() > 1e-6 {
                hit = true;
            }
            out.push(y as f32);
        }
        clamped += hit as usize;
    }
    Ok((ImageBuffer::new(reflectance.width(), reflectance.height(), 3, out)?, clamped))
}

/// New triple with rotated reflectance, the same shading and `I = R' * S`.
pub fn chroma_rotate(triple: &IntrinsicTriple, angle: f64) -> Result<AugmentedTriple, AugmentError> {
    let (reflectance, clamped_pixels) = if angle == 0.0 {
        (triple.reflectance.clone(), 0)
    } else {
        rotate_reflectance(&triple.reflectance, angle)?
    };
    let image = multiply_broadcast(&reflectance, &triple.shading)?;
    Ok(AugmentedTriple {
        triple: IntrinsicTriple {
            image,
            reflectance,
            shading: triple.shading.clone(),
            scene_id: triple.scene_id.clone(),
            view_index: triple.view_index,
        },
        clamped: clamped_pixels > 0,
        clamped_pixels,
    })
}
