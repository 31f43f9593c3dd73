//! Gradient-classification Retinex.
//!
//! Log-image gradients above a threshold are attributed to reflectance,
//! the rest to shading. The shading field is integrated with a Poisson
//! solve; log-reflectance is the remainder.

mod poisson;

pub use poisson::{forward_gradients, poisson_solve, solve_poisson, PoissonError, PoissonSolution, SolverParams};

use serde::{Deserialize, Serialize};

use crate::image::ImageBuffer;
use crate::metrics::DecompositionEstimate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetinexParams {
    /// Threshold on `|grad log I|` of the gray image.
    pub gradient_threshold: f64,
    /// Also classify an edge as reflectance when chromaticity changes by more
    /// than `chroma_threshold` (L2 over rgb chromaticities).
    pub use_chromaticity: bool,
    pub chroma_threshold: f64,
    /// Floor applied before taking logs.
    pub epsilon: f64,
    pub solver: SolverParams,
}

impl Default for RetinexParams {
    fn default() -> Self {
        Self {
            gradient_threshold: 0.075,
            use_chromaticity: true,
            chroma_threshold: 0.02,
            epsilon: 1e-4,
            solver: SolverParams::default(),
        }
    }
}

/// Which forward-difference edges were classified as reflectance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    /// `horizontal[i]`: edge between pixel i and i+1 (last column unused).
    pub horizontal: Vec<bool>,
    /// `vertical[i]`: edge between pixel i and i+width (last row unused).
    pub vertical: Vec<bool>,
}

impl EdgeMap {
    pub fn reflectance_edges(&self) -> usize {
        self.horizontal.iter().chain(&self.vertical).filter(|&&b| b).count()
    }

    /// True if every reflectance edge of `self` is also one in `other`.
    pub fn is_subset_of(&self, other: &EdgeMap) -> bool {
        self.horizontal.iter().zip(&other.horizontal).all(|(a, b)| !a || *b)
            && self.vertical.iter().zip(&other.vertical).all(|(a, b)| !a || *b)
    }
}

struct LogImage {
    width: usize,
    height: usize,
    gray_log: Vec<f64>,
    /// rgb chromaticities `I_c / sum(I)`; for one-channel input all 1/3.
    chroma: Vec<[f64; 3]>,
}

fn log_image(image: &ImageBuffer, epsilon: f64) -> LogImage {
    let c = image.channels();
    let n = image.pixel_count();
    let mut gray_log = Vec::with_capacity(n);
    let mut chroma = Vec::with_capacity(n);
    for i in 0..n {
        let px = image.pixel(i);
        let v: [f64; 3] = if c == 3 {
            [px[0] as f64, px[1] as f64, px[2] as f64].map(|x| x.max(epsilon))
        } else {
            [(px[0] as f64).max(epsilon); 3]
        };
        let sum = v[0] + v[1] + v[2];
        gray_log.push((sum / 3.0).ln());
        chroma.push([v[0] / sum, v[1] / sum, v[2] / sum]);
    }
    LogImage {
        width: image.width(),
        height: image.height(),
        gray_log,
        chroma,
    }
}

fn chroma_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn classify(log: &LogImage, params: &RetinexParams) -> EdgeMap {
    let (w, h) = (log.width, log.height);
    let is_reflectance = |i: usize, j: usize| {
        let dg = log.gray_log[j] - log.gray_log[i];
        dg.abs() > params.gradient_threshold
            || (params.use_chromaticity && chroma_distance(&log.chroma[i], &log.chroma[j]) > params.chroma_threshold)
    };
    let mut horizontal = vec![false; w * h];
    let mut vertical = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                horizontal[i] = is_reflectance(i, i + 1);
            }
            if y + 1 < h {
                vertical[i] = is_reflectance(i, i + w);
            }
        }
    }
    EdgeMap {
        width: w,
        height: h,
        horizontal,
        vertical,
    }
}

/// Edge classification alone, for inspection and tests.
pub fn classify_edges(image: &ImageBuffer, params: &RetinexParams) -> EdgeMap {
    classify(&log_image(image, params.epsilon), params)
}

/// Splits `image` into reflectance (same channel count) and one-channel
/// shading. Output scale: max reflectance is 1.
pub fn retinex_decompose(image: &ImageBuffer, params: &RetinexParams) -> Result<DecompositionEstimate, PoissonError> {
    let log = log_image(image, params.epsilon);
    let edges = classify(&log, params);
    let (w, h) = (log.width, log.height);
    let (mut gx, mut gy) = forward_gradients(w, h, &log.gray_log);
    for i in 0..w * h {
        if edges.horizontal[i] {
            gx[i] = 0.0;
        }
        if edges.vertical[i] {
            gy[i] = 0.0;
        }
    }
    let shading_log = solve_poisson(w, h, &gx, &gy, &params.solver)?.field;
    let mean = log.gray_log.iter().sum::<f64>() / (w * h) as f64;

    let channels = image.channels();
    let mut reflectance = Vec::with_capacity(w * h * channels);
    for (i, s) in shading_log.iter().enumerate() {
        let r = (log.gray_log[i] - mean - s).exp();
        if channels == 3 {
            reflectance.extend(log.chroma[i].iter().map(|c| r * 3.0 * c));
        } else {
            reflectance.push(r);
        }
    }
    let peak = reflectance.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    // image = R * S up to the epsilon floor, so S carries mean + the peak
    let shading: Vec<f32> = shading_log.iter().map(|s| ((s + mean).exp() * peak) as f32).collect();
    let reflectance: Vec<f32> = reflectance.iter().map(|r| (r / peak) as f32).collect();
    Ok(DecompositionEstimate {
        reflectance: ImageBuffer::new(w, h, channels, reflectance)?,
        shading: ImageBuffer::new(w, h, 1, shading)?,
        method: "retinex".to_string(),
    })
}
