use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use tracing::warn;

use super::{dataset_root, image_paths, io_err, load_triple, save_triple, DatasetError, DatasetManifest, EntryFlags, Failure, ImageEntry, Split, IMAGES_DIR, MANIFEST_FILE};
use crate::augment::chroma_rotate;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AugmentSummary {
    pub written: usize,
    pub clamped: usize,
    pub failures: Vec<Failure>,
    pub manifest: PathBuf,
}

/// Writes one rotated copy of every selected entry per angle into a new
/// dataset at `out`. Augmented entries keep the source split and scene, and
/// record the angle, the source image and whether clamping happened.
pub fn augment_dataset(manifest_path: &Path, angles: &[f64], out: &Path, split: Option<Split>) -> Result<AugmentSummary, DatasetError> {
    if angles.is_empty() {
        return Err(DatasetError::Invalid("no angles given".into()));
    }
    if let Some(a) = angles.iter().find(|a| !(a.abs() <= std::f64::consts::PI)) {
        return Err(DatasetError::Invalid(format!("angle {a} outside [-pi, pi]")));
    }
    let source = DatasetManifest::load(manifest_path)?;
    let root = dataset_root(manifest_path);
    let images = out.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(io_err(&images))?;
    let gamma = source.config.preview_gamma;

    let jobs: Vec<(&ImageEntry, usize, f64)> = source
        .entries_in(split)
        .flat_map(|e| angles.iter().enumerate().map(move |(k, &a)| (e, k, a)))
        .collect();
    let results: Vec<Result<ImageEntry, Failure>> = jobs
        .par_iter()
        .map(|&(entry, k, angle)| {
            let image_id = format!("{}_rot{k}", entry.image_id);
            let run = || -> Result<ImageEntry, DatasetError> {
                let (triple, mask) = load_triple(&root, entry)?;
                let aug = chroma_rotate(&triple, angle).map_err(|e| DatasetError::Invalid(e.to_string()))?;
                aug.triple.verify()?;
                let files = image_paths(&image_id);
                save_triple(out, &files, &aug.triple, &mask, gamma)?;
                Ok(ImageEntry {
                    image_id: image_id.clone(),
                    files,
                    flags: EntryFlags {
                        source_image: Some(entry.image_id.clone()),
                        rotation: Some(angle),
                        clamped: aug.clamped,
                        clamped_pixels: aug.clamped_pixels,
                    },
                    ..entry.clone()
                })
            };
            run().map_err(|e| {
                warn!(image = %image_id, error = %e, "augmentation failed");
                Failure {
                    id: image_id.clone(),
                    error: e.to_string(),
                }
            })
        })
        .collect();

    let mut manifest = DatasetManifest::new(source.master_seed, source.scene_count, source.config.clone());
    for r in results {
        match r {
            Ok(e) => manifest.entries.push(e),
            Err(f) => manifest.failures.push(f),
        }
    }
    manifest.sort_entries();
    let summary = AugmentSummary {
        written: manifest.entries.len(),
        clamped: manifest.entries.iter().filter(|e| e.flags.clamped).count(),
        failures: manifest.failures.clone(),
        manifest: out.join(MANIFEST_FILE),
    };
    manifest.save(&summary.manifest)?;
    Ok(summary)
}
