//! On-disk datasets: manifest, generation, evaluation, baselines and
//! augmentation.
//!
//! Layout under a dataset root:
//!
//! ```text
//! manifest.json
//! scenes/<scene_id>.json          scene record (spec + hash), written last
//! images/<image_id>_{img,ref,sha,mask}.pfm
//! images/<image_id>_preview.png
//! ```
//!
//! `image_id` is `<scene_id>_<view>` for rendered views. Prediction
//! directories use `<image_id>_ref.pfm` and `<image_id>_sha.pfm`.

mod augment;
mod evaluate;
mod generate;

pub use augment::{augment_dataset, AugmentSummary};
pub use evaluate::{evaluate_predictions, run_baseline, verify_dataset, AggregateRow, EvaluateOptions, EvaluationReport, ImageReport, VerifyReport};
pub use generate::{generate_dataset, GenerateSummary, SceneRecord};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{read_pfm, write_pfm_to, write_png_preview_to, ImageBuffer, ImageError, IntrinsicTriple, Mask, TriplePaths};
use crate::metrics::MetricError;
use crate::render::RenderError;
use crate::retinex::PoissonError;
use crate::rng::{stream, StreamRng, RNG_VERSION};
use crate::scene::{GeneratorConfig, SceneError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENES_DIR: &str = "scenes";
pub const IMAGES_DIR: &str = "images";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Solver(#[from] PoissonError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl DatasetError {
    /// True when the error comes from user input rather than processing.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            DatasetError::Invalid(_) | DatasetError::Json { .. } | DatasetError::Scene(SceneError::Config(_) | SceneError::EmptyCatalog | SceneError::NoObjects)
        )
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything that shapes the rendered pixels, snapshotted into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub generator: GeneratorConfig,
    pub samples_per_pixel: u32,
    pub train_fraction: f64,
    pub preview_gamma: f32,
    /// Target log-average luminance of each rendered view; shading is scaled
    /// to meet it. `None` keeps raw irradiance units.
    pub exposure_key: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            samples_per_pixel: 4,
            train_fraction: 0.6,
            preview_gamma: 2.2,
            exposure_key: Some(0.18),
        }
    }
}

impl DatasetConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let config: DatasetConfig = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        self.generator.validate()?;
        if self.samples_per_pixel == 0 {
            return Err(DatasetError::Invalid("samples_per_pixel must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(DatasetError::Invalid("train_fraction must be in [0, 1]".into()));
        }
        if !(self.preview_gamma > 0.0 && self.preview_gamma.is_finite()) {
            return Err(DatasetError::Invalid("preview_gamma must be positive".into()));
        }
        if self.exposure_key.is_some_and(|k| !(k > 0.0 && k.is_finite())) {
            return Err(DatasetError::Invalid("exposure_key must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Scene-level split: a seeded shuffle of scene indices, the first
/// `round(train_fraction * scenes)` go to train. Both views of a scene share
/// a split so no scene leaks across.
pub fn split_assignment(master_seed: u64, scenes: u64, train_fraction: f64) -> Vec<Split> {
    let mut order: Vec<u64> = (0..scenes).collect();
    StreamRng::new(master_seed, 0, stream::SPLIT).shuffle(&mut order);
    let n_train = (train_fraction * scenes as f64).round() as usize;
    let mut splits = vec![Split::Test; scenes as usize];
    for &i in &order[..n_train.min(order.len())] {
        splits[i as usize] = Split::Train;
    }
    splits
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntryFlags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_image: Option<String>,
    /// Chromaticity rotation in radians, for augmented entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<f64>,
    /// Reflectance was clamped into [0,1] during augmentation.
    #[serde(default)]
    pub clamped: bool,
    #[serde(default)]
    pub clamped_pixels: usize,
}

/// One rendered (or augmented) view. Paths are relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub scene_id: String,
    pub scene_index: u64,
    pub view: u8,
    pub split: Split,
    pub spec_hash: String,
    /// Factor applied to rendered irradiance; raw shading is `S / exposure`.
    #[serde(default = "unit_exposure")]
    pub exposure: f64,
    pub files: TriplePaths,
    #[serde(default)]
    pub flags: EntryFlags,
}

fn unit_exposure() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub rng_version: String,
    pub master_seed: u64,
    pub scene_count: u64,
    pub config: DatasetConfig,
    /// Sorted by `(scene_id, view, image_id)`.
    pub entries: Vec<ImageEntry>,
    #[serde(default)]
    pub failures: Vec<Failure>,
}

impl DatasetManifest {
    pub fn new(master_seed: u64, scene_count: u64, config: DatasetConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            rng_version: RNG_VERSION.to_string(),
            master_seed,
            scene_count,
            config,
            entries: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => DatasetError::Invalid(format!("manifest {} not found", path.display())),
            _ => io_err(path)(e),
        })?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(DatasetError::Invalid(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        write_atomic(path, |w| Ok(w.write_all(self.to_json().as_bytes())?))
    }

    pub fn sort_entries(&mut self) {
        self.entries.sort_by(|a, b| (&a.scene_id, a.view, &a.image_id).cmp(&(&b.scene_id, b.view, &b.image_id)));
    }

    pub fn entries_in(&self, split: Option<Split>) -> impl Iterator<Item = &ImageEntry> {
        self.entries.iter().filter(move |e| split.is_none_or(|s| e.split == s))
    }
}

/// Directory a manifest's relative paths resolve against.
pub fn dataset_root(manifest_path: &Path) -> PathBuf {
    match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<(), ImageError>) -> Result<(), DatasetError> {
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    let file = w.into_inner().map_err(|e| DatasetError::Io {
        path: tmp.clone(),
        source: e.into_error(),
    })?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub(crate) fn save_pfm(path: &Path, image: &ImageBuffer) -> Result<(), DatasetError> {
    write_atomic(path, |w| write_pfm_to(w, image))
}

pub(crate) fn save_preview(path: &Path, image: &ImageBuffer, gamma: f32) -> Result<(), DatasetError> {
    write_atomic(path, |w| write_png_preview_to(w, image, gamma))
}

pub(crate) fn image_paths(stem: &str) -> TriplePaths {
    let names = TriplePaths::for_stem(stem);
    let join = |n: String| format!("{IMAGES_DIR}/{n}");
    TriplePaths {
        image: join(names.image),
        reflectance: join(names.reflectance),
        shading: join(names.shading),
        mask: join(names.mask),
        preview: join(names.preview),
    }
}

pub(crate) fn load_pfm(path: &Path) -> Result<ImageBuffer, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    Ok(read_pfm(path)?)
}

/// Ground truth stored for one entry.
pub fn load_triple(root: &Path, entry: &ImageEntry) -> Result<(IntrinsicTriple, Mask), DatasetError> {
    let image = load_pfm(&root.join(&entry.files.image))?;
    let reflectance = load_pfm(&root.join(&entry.files.reflectance))?;
    let shading = load_pfm(&root.join(&entry.files.shading))?;
    let mask = Mask::from_buffer(&load_pfm(&root.join(&entry.files.mask))?)?;
    let triple = IntrinsicTriple {
        image,
        reflectance,
        shading,
        scene_id: entry.scene_id.clone(),
        view_index: entry.view,
    };
    Ok((triple, mask))
}

/// Writes the four PFMs and the preview for one triple.
pub(crate) fn save_triple(root: &Path, files: &TriplePaths, triple: &IntrinsicTriple, mask: &Mask, gamma: f32) -> Result<(), DatasetError> {
    save_pfm(&root.join(&files.image), &triple.image)?;
    save_pfm(&root.join(&files.reflectance), &triple.reflectance)?;
    save_pfm(&root.join(&files.shading), &triple.shading)?;
    save_pfm(&root.join(&files.mask), &mask.to_buffer())?;
    save_preview(&root.join(&files.preview), &triple.image, gamma)
}

pub(crate) fn files_exist(root: &Path, files: &TriplePaths) -> bool {
    [&files.image, &files.reflectance, &files.shading, &files.mask, &files.preview]
        .iter()
        .all(|f| root.join(f).is_file())
}
