//! Intrinsic-image error metrics: scale-invariant MSE, local MSE over
//! overlapping windows, and global DSSIM, with optional region masks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{multiply_broadcast, ImageBuffer, ImageError, IntrinsicTriple, Mask};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("no mask supplied for region {0}")]
    MissingRegion(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleInvariantFit {
    /// Brightness factor applied to the prediction.
    pub alpha_hat: f64,
    pub residual_mse: f64,
}

fn check_shapes(gt: &ImageBuffer, pred: &ImageBuffer, mask: Option<&Mask>) -> Result<(), MetricError> {
    if !gt.same_size(pred) || gt.channels() != pred.channels() {
        return Err(MetricError::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            gt.width(),
            gt.height(),
            gt.channels(),
            pred.width(),
            pred.height(),
            pred.channels()
        )));
    }
    if let Some(m) = mask {
        if m.width() != gt.width() || m.height() != gt.height() {
            return Err(MetricError::Shape("mask size differs from image".into()));
        }
    }
    Ok(())
}

/// Least-squares fit over the pixels for which `select(pixel)` holds.
/// Returns `None` when nothing is selected.
fn fit_selected(gt: &ImageBuffer, pred: &ImageBuffer, pixels: impl Iterator<Item = usize> + Clone) -> Option<ScaleInvariantFit> {
    let c = gt.channels();
    let (g, p) = (gt.data(), pred.data());
    let mut n = 0usize;
    let (mut xy, mut yy) = (0.0f64, 0.0f64);
    for i in pixels.clone() {
        n += 1;
        for k in i * c..(i + 1) * c {
            let (x, y) = (g[k] as f64, p[k] as f64);
            xy += x * y;
            yy += y * y;
        }
    }
    if n == 0 {
        return None;
    }
    let alpha = if yy > 0.0 { xy / yy } else { 0.0 };
    // explicit residual sum, not xx - alpha*xy, to avoid cancellation
    let mut sse = 0.0f64;
    for i in pixels {
        for k in i * c..(i + 1) * c {
            let d = g[k] as f64 - alpha * p[k] as f64;
            sse += d * d;
        }
    }
    Some(ScaleInvariantFit {
        alpha_hat: alpha,
        residual_mse: sse / n as f64,
    })
}

/// Scale-invariant MSE: one brightness factor for all channels, residual
/// summed over channels and averaged over the selected pixels.
pub fn si_mse(gt: &ImageBuffer, pred: &ImageBuffer, mask: Option<&Mask>) -> Result<ScaleInvariantFit, MetricError> {
    check_shapes(gt, pred, mask)?;
    let n = gt.pixel_count();
    let fit = match mask {
        Some(m) => fit_selected(gt, pred, (0..n).filter(|&i| m.get(i))),
        None => fit_selected(gt, pred, 0..n),
    };
    fit.ok_or(MetricError::EmptyMask)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmseParams {
    /// Window side as a fraction of the larger image dimension.
    pub window_fraction: f64,
    /// Step as a fraction of the window side.
    pub step_fraction: f64,
}

impl Default for LmseParams {
    fn default() -> Self {
        Self {
            window_fraction: 0.1,
            step_fraction: 0.5,
        }
    }
}

impl LmseParams {
    /// Window side and step in pixels for an image of the given size.
    pub fn window(&self, width: usize, height: usize) -> (usize, usize) {
        let side = ((self.window_fraction * width.max(height) as f64).round() as usize).max(1);
        let step = ((side as f64 * self.step_fraction) as usize).max(1);
        (side, step)
    }
}

fn window_starts(len: usize, side: usize, step: usize) -> Vec<usize> {
    if side >= len {
        return vec![0];
    }
    (0..=len - side).step_by(step).collect()
}

/// Mean scale-invariant MSE over overlapping square windows. Windows that
/// contain no masked pixel are skipped.
pub fn lmse(gt: &ImageBuffer, pred: &ImageBuffer, mask: Option<&Mask>) -> Result<f64, MetricError> {
    lmse_with(gt, pred, mask, &LmseParams::default())
}

pub fn lmse_with(gt: &ImageBuffer, pred: &ImageBuffer, mask: Option<&Mask>, params: &LmseParams) -> Result<f64, MetricError> {
    check_shapes(gt, pred, mask)?;
    let (w, h) = (gt.width(), gt.height());
    let (side, step) = params.window(w, h);
    let (wx, wy) = (side.min(w), side.min(h));
    let mut total = 0.0f64;
    let mut count = 0usize;
    for y0 in window_starts(h, side, step) {
        for x0 in window_starts(w, side, step) {
            let pixels = (y0..y0 + wy)
                .flat_map(move |y| (x0..x0 + wx).map(move |x| y * w + x))
                .filter(|&i| mask.is_none_or(|m| m.get(i)));
            if let Some(fit) = fit_selected(gt, pred, pixels) {
                total += fit.residual_mse;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Global SSIM from whole-region means, variances and covariance,
/// averaged over channels.
pub fn ssim(gt: &ImageBuffer, pred: &ImageBuffer, mask: Option<&Mask>, params: &SsimParams) -> Result<f64, MetricError> {
    check_shapes(gt, pred, mask)?;
    let ch = gt.channels();
    let selected: Vec<usize> = match mask {
        Some(m) => (0..gt.pixel_count()).filter(|&i| m.get(i)).collect(),
        None => (0..gt.pixel_count()).collect(),
    };
    if selected.is_empty() {
        return Err(MetricError::EmptyMask);
    }
    let n = selected.len() as f64;
    let (c1, c2) = (params.c1(), params.c2());
    let (g, p) = (gt.data(), pred.data());
    let mut acc = 0.0;
    for c in 0..ch {
        let mu_x = selected.iter().map(|&i| g[i * ch + c] as f64).sum::<f64>() / n;
        let mu_y = selected.iter().map(|&i| p[i * ch + c] as f64).sum::<f64>() / n;
        let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
        for &i in &selected {
            let dx = g[i * ch + c] as f64 - mu_x;
            let dy = p[i * ch + c] as f64 - mu_y;
            vx += dx * dx;
            vy += dy * dy;
            cov += dx * dy;
        }
        let (vx, vy, cov) = (vx / n, vy / n, cov / n);
        acc += ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (vx + vy + c2));
    }
    Ok(acc / ch as f64)
}

/// Structural dissimilarity `(1 - SSIM) / 2`, clamped to `[0, 1]`.
pub fn dssim(gt: &ImageBuffer, pred: &ImageBuffer, params: &SsimParams) -> Result<f64, MetricError> {
    dssim_masked(gt, pred, None, params)
}

pub fn dssim_masked(gt: &ImageBuffer, pred: &ImageBuffer, mask: Option<&Mask>, params: &SsimParams) -> Result<f64, MetricError> {
    Ok(((1.0 - ssim(gt, pred, mask, params)?) / 2.0).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------- reports

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Whole,
    Foreground,
    Background,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Whole, Region::Foreground, Region::Background];

    pub fn name(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::Foreground => "fg",
            Region::Background => "bg",
        }
    }

    pub fn parse(s: &str) -> Option<Region> {
        match s.trim() {
            "whole" | "all" => Some(Region::Whole),
            "fg" | "foreground" | "object" => Some(Region::Foreground),
            "bg" | "background" | "walls" => Some(Region::Background),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Reflectance,
    Shading,
    Recombined,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Reflectance, Target::Shading, Target::Recombined];

    pub fn name(self) -> &'static str {
        match self {
            Target::Reflectance => "reflectance",
            Target::Shading => "shading",
            Target::Recombined => "recombined",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub mse: f64,
    pub lmse: f64,
    pub dssim: f64,
    /// Brightness factor fitted by the whole-region MSE.
    pub alpha_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub region: Region,
    pub pixel_count: usize,
    pub reflectance: MetricScores,
    pub shading: MetricScores,
    pub recombined: MetricScores,
}

impl MetricReport {
    pub fn scores(&self, target: Target) -> &MetricScores {
        match target {
            Target::Reflectance => &self.reflectance,
            Target::Shading => &self.shading,
            Target::Recombined => &self.recombined,
        }
    }
}

/// A predicted decomposition of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionEstimate {
    pub reflectance: ImageBuffer,
    pub shading: ImageBuffer,
    pub method: String,
}

/// Region masks available for an image. `Whole` never needs a mask.
#[derive(Clone, Debug, Default)]
pub struct RegionMasks {
    pub foreground: Option<Mask>,
}

impl RegionMasks {
    pub fn with_foreground(mask: Mask) -> Self {
        Self { foreground: Some(mask) }
    }

    fn mask_for(&self, region: Region) -> Result<Option<Mask>, MetricError> {
        match region {
            Region::Whole => Ok(None),
            Region::Foreground => self
                .foreground
                .clone()
                .map(Some)
                .ok_or_else(|| MetricError::MissingRegion("fg".into())),
            Region::Background => self
                .foreground
                .as_ref()
                .map(|m| Some(m.inverted()))
                .ok_or_else(|| MetricError::MissingRegion("bg".into())),
        }
    }
}

fn scores(gt: &ImageBuffer, pred: &ImageBuffer, mask: Option<&Mask>, ssim_params: &SsimParams) -> Result<MetricScores, MetricError> {
    let fit = si_mse(gt, pred, mask)?;
    Ok(MetricScores {
        mse: fit.residual_mse,
        lmse: lmse(gt, pred, mask)?,
        dssim: dssim_masked(gt, pred, mask, ssim_params)?,
        alpha_hat: fit.alpha_hat,
    })
}

/// Scores a prediction against ground truth on each requested region.
pub fn evaluate_triple(
    gt: &IntrinsicTriple,
    pred: &DecompositionEstimate,
    masks: &RegionMasks,
    regions: &[Region],
) -> Result<Vec<MetricReport>, MetricError> {
    if !gt.reflectance.same_size(&pred.reflectance) || !gt.shading.same_size(&pred.shading) {
        return Err(MetricError::Shape("prediction size differs from ground truth".into()));
    }
    let recombined = multiply_broadcast(&pred.reflectance, &pred.shading)?;
    let params = SsimParams::default();
    regions
        .iter()
        .map(|&region| {
            let mask = masks.mask_for(region)?;
            let m = mask.as_ref();
            Ok(MetricReport {
                region,
                pixel_count: m.map_or(gt.image.pixel_count(), Mask::count),
                reflectance: scores(&gt.reflectance, &pred.reflectance, m, &params)?,
                shading: scores(&gt.shading, &pred.shading, m, &params)?,
                recombined: scores(&gt.image, &recombined, m, &params)?,
            })
        })
        .collect()
}
