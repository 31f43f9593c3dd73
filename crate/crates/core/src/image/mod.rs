//! Pixel containers shared by every stage of the pipeline.
//!
//! All buffers hold linear-light `f32` values in row-major order, top row
//! first. Shading is single channel, reflectance and composite images carry
//! three channels.

mod pfm;
mod preview;

pub use pfm::{read_pfm, read_pfm_from, write_pfm, write_pfm_to};
pub use preview::{write_png_preview, write_png_preview_to};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum deviation allowed between an image and the product of its
/// reflectance and shading.
pub const MODEL_TOLERANCE: f32 = 1e-6;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PFM header: {0}")]
    Header(String),
    #[error("image dimensions {width}x{height}x{channels} overflow")]
    DimensionOverflow {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("non-finite value in payload at element {0}")]
    NonFinite(usize),
    #[error("buffer length {len} does not match {width}x{height}x{channels}")]
    Length {
        len: usize,
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("unsupported channel count {0}")]
    Channels(usize),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("png encoding failed: {0}")]
    Png(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("product model violated by {max_error:e} at element {index}")]
    ModelViolation { max_error: f32, index: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Channels(channels));
        }
        let expected = element_count(width, height, channels)?;
        if data.len() != expected {
            return Err(ImageError::Length {
                len: data.len(),
                width,
                height,
                channels,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds a buffer by evaluating `f(x, y, channel)` at every element.
    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data).expect("from_fn produced an invalid buffer")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> &[f32] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn same_size(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> ImageBuffer {
        ImageBuffer::new(self.width, self.height, self.channels, self.data.iter().map(|&v| f(v)).collect())
            .expect("map produced a non-finite value")
    }

    /// True when every value lies in `[0, 1]`.
    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

fn element_count(width: usize, height: usize, channels: usize) -> Result<usize, ImageError> {
    width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or(ImageError::DimensionOverflow {
            width,
            height,
            channels,
        })
}

/// Per-pixel boolean region selector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if bits.len() != width * height {
            return Err(ImageError::Length {
                len: bits.len(),
                width,
                height,
                channels: 1,
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    /// Interprets a single-channel buffer, selecting pixels with value > 0.5.
    pub fn from_buffer(buffer: &ImageBuffer) -> Result<Self, ImageError> {
        if buffer.channels() != 1 {
            return Err(ImageError::Channels(buffer.channels()));
        }
        Ok(Self {
            width: buffer.width(),
            height: buffer.height(),
            bits: buffer.data().iter().map(|&v| v > 0.5).collect(),
        })
    }

    pub fn to_buffer(&self) -> ImageBuffer {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn inverted(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

/// Per-pixel product of a 3-channel reflectance and a 1-channel shading.
pub fn multiply_broadcast(reflectance: &ImageBuffer, shading: &ImageBuffer) -> Result<ImageBuffer, ImageError> {
    if reflectance.channels() != 3 {
        return Err(ImageError::Channels(reflectance.channels()));
    }
    if shading.channels() != 1 {
        return Err(ImageError::Channels(shading.channels()));
    }
    if !reflectance.same_size(shading) {
        return Err(ImageError::Mismatch(format!(
            "reflectance {}x{} vs shading {}x{}",
            reflectance.width(),
            reflectance.height(),
            shading.width(),
            shading.height()
        )));
    }
    let data = reflectance
        .data()
        .chunks_exact(3)
        .zip(shading.data())
        .flat_map(|(rgb, &s)| [rgb[0] * s, rgb[1] * s, rgb[2] * s])
        .collect();
    ImageBuffer::new(reflectance.width(), reflectance.height(), 3, data)
}

/// Largest absolute deviation `|I - R*S|` and the flat element index where it occurs.
pub fn product_model_error(image: &ImageBuffer, reflectance: &ImageBuffer, shading: &ImageBuffer) -> Result<(f32, usize), ImageError> {
    let product = multiply_broadcast(reflectance, shading)?;
    if image.channels() != 3 || !image.same_size(&product) {
        return Err(ImageError::Mismatch("image does not match reflectance".into()));
    }
    Ok(image
        .data()
        .iter()
        .zip(product.data())
        .map(|(a, b)| (a - b).abs())
        .enumerate()
        .fold((0.0f32, 0usize), |best, (i, e)| if e > best.0 { (e, i) } else { best }))
}

/// Geometric mean of Rec. 709 luminance, `exp(mean(ln(delta + L)))`.
pub fn log_average_luminance(image: &ImageBuffer, delta: f64) -> f64 {
    let n = image.pixel_count().max(1) as f64;
    let sum: f64 = (0..image.pixel_count())
        .map(|i| {
            let px = image.pixel(i);
            let l = if px.len() == 3 {
                0.2126 * px[0] as f64 + 0.7152 * px[1] as f64 + 0.0722 * px[2] as f64
            } else {
                px[0] as f64
            };
            (delta + l.max(0.0)).ln()
        })
        .sum();
    (sum / n).exp()
}

/// An (image, reflectance, shading) ground-truth set for one rendered view.
#[derive(Clone, Debug, PartialEq)]
pub struct IntrinsicTriple {
    pub image: ImageBuffer,
    pub reflectance: ImageBuffer,
    pub shading: ImageBuffer,
    pub scene_id: String,
    pub view_index: u8,
}

impl IntrinsicTriple {
    /// Builds a triple whose image is the exact product `R*S`.
    pub fn compose(reflectance: ImageBuffer, shading: ImageBuffer, scene_id: impl Into<String>, view_index: u8) -> Result<Self, ImageError> {
        let image = multiply_broadcast(&reflectance, &shading)?;
        Ok(Self {
            image,
            reflectance,
            shading,
            scene_id: scene_id.into(),
            view_index,
        })
    }

    /// Checks shape consistency and the product model within [`MODEL_TOLERANCE`].
    pub fn verify(&self) -> Result<f32, ImageError> {
        if self.image.channels() != 3 || self.reflectance.channels() != 3 || self.shading.channels() != 1 {
            return Err(ImageError::Mismatch("triple channel layout must be 3/3/1".into()));
        }
        if !self.image.same_size(&self.reflectance) || !self.image.same_size(&self.shading) {
            return Err(ImageError::Mismatch("triple buffers differ in size".into()));
        }
        let (max_error, index) = product_model_error(&self.image, &self.reflectance, &self.shading)?;
        if max_error > MODEL_TOLERANCE {
            return Err(ImageError::ModelViolation { max_error, index });
        }
        Ok(max_error)
    }

    /// Scales shading by `factor` and recomposes the image, so the product
    /// model still holds exactly.
    pub fn exposed(self, factor: f32) -> Result<Self, ImageError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(ImageError::Invalid(format!("exposure must be positive, got {factor}")));
        }
        let shading = self.shading.map(|v| v * factor);
        Self::compose(self.reflectance, shading, self.scene_id, self.view_index)
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// File names for one view: `<scene_id>_<view>_{img,ref,sha,mask}.pfm` plus a PNG preview.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriplePaths {
    pub image: String,
    pub reflectance: String,
    pub shading: String,
    pub mask: String,
    pub preview: String,
}

impl TriplePaths {
    pub fn for_view(scene_id: &str, view: u8) -> Self {
        Self::for_stem(&format!("{scene_id}_{view}"))
    }

    pub fn for_stem(stem: &str) -> Self {
        Self {
            image: format!("{stem}_img.pfm"),
            reflectance: format!("{stem}_ref.pfm"),
            shading: format!("{stem}_sha.pfm"),
            mask: format!("{stem}_mask.pfm"),
            preview: format!("{stem}_preview.png"),
        }
    }
}
