//! Synthetic intrinsic-image scenes: generation, exact ground-truth
//! rendering, evaluation metrics, a Retinex baseline, the supervised
//! intrinsic loss and chromaticity augmentation.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod dataset;
pub mod geometry;
pub mod image;
pub mod loss;
pub mod mesh;
pub mod metrics;
pub mod render;
pub mod retinex;
pub mod rng;
pub mod scene;

pub use augment::{chroma_rotate, AugmentedTriple};
pub use dataset::{DatasetConfig, DatasetManifest, Split};
pub use geometry::Vec3;
pub use image::{read_pfm, write_pfm, write_png_preview, ImageBuffer, ImageError, IntrinsicTriple, Mask, TriplePaths, MODEL_TOLERANCE};
pub use loss::{intrinsic_loss, LossValue, LossWeights};
pub use metrics::{dssim, evaluate_triple, lmse, si_mse, DecompositionEstimate, MetricReport, Region, Target};
pub use render::{render_triple, Camera, RenderedTriple};
pub use retinex::{retinex_decompose, RetinexParams};
pub use scene::{GeneratorConfig, SceneGenerator, SceneSpec};
