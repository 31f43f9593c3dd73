use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::{
    files_exist, image_paths, io_err, save_triple, split_assignment, write_atomic, DatasetConfig, DatasetError, DatasetManifest, EntryFlags, Failure,
    ImageEntry, IMAGES_DIR, MANIFEST_FILE, SCENES_DIR,
};
use crate::image::{log_average_luminance, IntrinsicTriple};
use crate::render::PreparedScene;
use crate::scene::{SceneGenerator, SceneSpec};

/// Per-scene sidecar. Its presence with a matching hash marks the scene's
/// images as complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub spec_hash: String,
    pub samples_per_pixel: u32,
    pub exposure_key: Option<f64>,
    /// Exposure applied to each view.
    pub exposures: Vec<f64>,
    pub spec: SceneSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub rendered: usize,
    pub skipped: usize,
    pub failures: Vec<Failure>,
    pub manifest: PathBuf,
}

struct SceneOutcome {
    entries: Vec<ImageEntry>,
    skipped: bool,
}

fn record_path(root: &Path, scene_id: &str) -> PathBuf {
    root.join(SCENES_DIR).join(format!("{scene_id}.json"))
}

/// The stored record if it matches and every file is present.
fn completed_record(root: &Path, spec: &SceneSpec, hash: &str, config: &DatasetConfig) -> Option<SceneRecord> {
    let text = fs::read_to_string(record_path(root, &spec.scene_id)).ok()?;
    let record = serde_json::from_str::<SceneRecord>(&text).ok()?;
    let complete = record.spec_hash == hash
        && record.samples_per_pixel == config.samples_per_pixel
        && record.exposure_key == config.exposure_key
        && record.exposures.len() == spec.cameras.len()
        && (0..spec.cameras.len()).all(|v| files_exist(root, &image_paths(&format!("{}_{v}", spec.scene_id))));
    complete.then_some(record)
}

/// Scale that brings the view's log-average luminance to `key`.
fn metered_exposure(triple: &IntrinsicTriple, key: Option<f64>) -> f64 {
    match key {
        Some(key) => {
            let avg = log_average_luminance(&triple.image, 1e-4);
            if avg > 0.0 {
                key / avg
            } else {
                1.0
            }
        }
        None => 1.0,
    }
}

fn generate_scene(root: &Path, generator: &SceneGenerator, config: &DatasetConfig, master_seed: u64, index: u64, split: super::Split) -> Result<SceneOutcome, DatasetError> {
    let spec = generator.generate(master_seed, index);
    let hash = spec.spec_hash();
    let spp = config.samples_per_pixel;
    let mut entries: Vec<ImageEntry> = (0..spec.cameras.len() as u8)
        .map(|view| {
            let image_id = format!("{}_{view}", spec.scene_id);
            ImageEntry {
                files: image_paths(&image_id),
                image_id,
                scene_id: spec.scene_id.clone(),
                scene_index: index,
                view,
                split,
                spec_hash: hash.clone(),
                exposure: 1.0,
                flags: EntryFlags::default(),
            }
        })
        .collect();
    if let Some(record) = completed_record(root, &spec, &hash, config) {
        for (entry, exposure) in entries.iter_mut().zip(record.exposures) {
            entry.exposure = exposure;
        }
        return Ok(SceneOutcome { entries, skipped: true });
    }

    let record = record_path(root, &spec.scene_id);
    // a stale record must not vouch for half-written images
    if record.exists() {
        fs::remove_file(&record).map_err(io_err(&record))?;
    }
    let prepared = PreparedScene::from_spec(&spec)?;
    if prepared.degenerate_triangles() > 0 {
        warn!(scene = %spec.scene_id, count = prepared.degenerate_triangles(), "skipped degenerate triangles");
    }
    for entry in &mut entries {
        let rendered = prepared.render_triple(&spec, entry.view as usize, spp)?;
        // stored as applied, so S / exposure recovers irradiance exactly
        entry.exposure = metered_exposure(&rendered.triple, config.exposure_key) as f32 as f64;
        let triple = rendered.triple.exposed(entry.exposure as f32)?;
        triple.verify()?;
        save_triple(root, &entry.files, &triple, &rendered.foreground, config.preview_gamma)?;
    }
    let body = serde_json::to_string_pretty(&SceneRecord {
        spec_hash: hash,
        samples_per_pixel: spp,
        exposure_key: config.exposure_key,
        exposures: entries.iter().map(|e| e.exposure).collect(),
        spec,
    })
    .expect("scene record serializes");
    write_atomic(&record, |w| Ok(std::io::Write::write_all(w, body.as_bytes())?))?;
    Ok(SceneOutcome { entries, skipped: false })
}

/// Generates (or resumes) `scenes` scenes under `out` and writes the
/// manifest. Work runs on the current rayon pool; output does not depend on
/// its size. Per-scene failures are collected, not fatal.
pub fn generate_dataset(out: &Path, master_seed: u64, scenes: u64, config: &DatasetConfig) -> Result<GenerateSummary, DatasetError> {
    config.validate()?;
    let generator = SceneGenerator::new(config.generator.clone())?;
    for dir in [out.to_path_buf(), out.join(SCENES_DIR), out.join(IMAGES_DIR)] {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let splits = split_assignment(master_seed, scenes, config.train_fraction);
    let outcomes: Vec<(u64, Result<SceneOutcome, DatasetError>)> = (0..scenes)
        .into_par_iter()
        .map(|i| {
            let result = generate_scene(out, &generator, config, master_seed, i, splits[i as usize]);
            match &result {
                Ok(o) if o.skipped => info!(scene = i, "up to date"),
                Ok(_) => info!(scene = i, "rendered"),
                Err(e) => warn!(scene = i, error = %e, "scene failed"),
            }
            (i, result)
        })
        .collect();

    let mut manifest = DatasetManifest::new(master_seed, scenes, config.clone());
    let mut summary = GenerateSummary {
        manifest: out.join(MANIFEST_FILE),
        ..GenerateSummary::default()
    };
    for (i, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                if o.skipped {
                    summary.skipped += 1;
                } else {
                    summary.rendered += 1;
                }
                manifest.entries.extend(o.entries);
            }
            Err(e) => manifest.failures.push(Failure {
                id: crate::scene::scene_id(i),
                error: e.to_string(),
            }),
        }
    }
    manifest.sort_entries();
    summary.failures = manifest.failures.clone();
    manifest.save(&summary.manifest)?;
    Ok(summary)
}
