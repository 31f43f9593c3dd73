use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::{dataset_root, io_err, load_pfm, load_triple, save_pfm, write_atomic, DatasetError, DatasetManifest, Failure, ImageEntry, Split};
use crate::image::{ImageError, TriplePaths};
use crate::metrics::{evaluate_triple, DecompositionEstimate, MetricError, MetricReport, Region, RegionMasks, Target};
use crate::retinex::{retinex_decompose, RetinexParams};
use crate::scene::SceneGenerator;

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluateOptions {
    /// `None` evaluates every entry.
    pub split: Option<Split>,
    pub regions: Vec<Region>,
    /// Re-check the product model on each ground-truth triple first.
    pub verify_gt: bool,
    pub method: String,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            split: Some(Split::Test),
            regions: Region::ALL.to_vec(),
            verify_gt: false,
            method: "prediction".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: String,
    pub scene_id: String,
    pub view: u8,
    /// Regions with no pixels in this image are left out.
    pub regions: Vec<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_error: Option<f32>,
}

/// Mean of per-image scores for one (region, target) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub region: Region,
    pub target: Target,
    pub images: usize,
    pub mse: f64,
    pub lmse: f64,
    pub dssim: f64,
    pub alpha_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub split: Option<Split>,
    pub regions: Vec<Region>,
    pub images: Vec<ImageReport>,
    pub aggregate: Vec<AggregateRow>,
    /// Prediction files that were expected but not found.
    pub missing: Vec<String>,
    pub failures: Vec<Failure>,
}

impl EvaluationReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.failures.is_empty()
    }

    pub fn aggregate_row(&self, region: Region, target: Target) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|r| r.region == region && r.target == target)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), DatasetError> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
    }

    /// One row per region: reflectance then shading MSE/LMSE/DSSIM.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "region", "images", "ref_mse", "ref_lmse", "ref_dssim", "sha_mse", "sha_lmse", "sha_dssim"])?;
        for &region in &self.regions {
            let (Some(r), Some(s)) = (self.aggregate_row(region, Target::Reflectance), self.aggregate_row(region, Target::Shading)) else {
                continue;
            };
            w.write_record([
                self.method.clone(),
                region.name().to_string(),
                r.images.to_string(),
                format!("{:.6}", r.mse),
                format!("{:.6}", r.lmse),
                format!("{:.6}", r.dssim),
                format!("{:.6}", s.mse),
                format!("{:.6}", s.lmse),
                format!("{:.6}", s.dssim),
            ])?;
        }
        w.flush().map_err(|e| DatasetError::Csv(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        write_atomic(path, |w| Ok(w.write_all(&buf)?))
    }
}

fn aggregate(images: &[ImageReport], regions: &[Region]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &region in regions {
        for target in Target::ALL {
            let scores: Vec<_> = images
                .iter()
                .filter_map(|img| img.regions.iter().find(|r| r.region == region))
                .map(|r| r.scores(target))
                .collect();
            let n = scores.len();
            let mean = |f: &dyn Fn(&crate::metrics::MetricScores) -> f64| if n == 0 { 0.0 } else { scores.iter().map(|s| f(s)).sum::<f64>() / n as f64 };
            rows.push(AggregateRow {
                region,
                target,
                images: n,
                mse: mean(&|s| s.mse),
                lmse: mean(&|s| s.lmse),
                dssim: mean(&|s| s.dssim),
                alpha_hat: mean(&|s| s.alpha_hat),
            });
        }
    }
    rows
}

enum Outcome {
    Scored(ImageReport),
    Missing(Vec<String>),
    Failed(Failure),
}

fn prediction_paths(entry: &ImageEntry) -> (String, String) {
    let names = TriplePaths::for_stem(&entry.image_id);
    (names.reflectance, names.shading)
}

fn score_entry(root: &Path, pred_dir: &Path, entry: &ImageEntry, options: &EvaluateOptions) -> Outcome {
    let (ref_name, sha_name) = prediction_paths(entry);
    let missing: Vec<String> = [&ref_name, &sha_name]
        .into_iter()
        .filter(|n| !pred_dir.join(n).is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Outcome::Missing(missing);
    }
    let run = || -> Result<ImageReport, DatasetError> {
        let (gt, mask) = load_triple(root, entry)?;
        let model_error = if options.verify_gt { Some(gt.verify()?) } else { None };
        let pred = DecompositionEstimate {
            reflectance: load_pfm(&pred_dir.join(&ref_name))?,
            shading: load_pfm(&pred_dir.join(&sha_name))?,
            method: options.method.clone(),
        };
        if pred.reflectance.channels() != 3 || pred.shading.channels() != 1 {
            return Err(ImageError::Mismatch("predictions must be 3-channel reflectance and 1-channel shading".into()).into());
        }
        let masks = RegionMasks::with_foreground(mask);
        let mut regions = Vec::new();
        for &region in &options.regions {
            match evaluate_triple(&gt, &pred, &masks, &[region]) {
                Ok(mut r) => regions.append(&mut r),
                Err(MetricError::EmptyMask) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(ImageReport {
            image_id: entry.image_id.clone(),
            scene_id: entry.scene_id.clone(),
            view: entry.view,
            regions,
            model_error,
        })
    };
    match run() {
        Ok(r) => Outcome::Scored(r),
        Err(e) => Outcome::Failed(Failure {
            id: entry.image_id.clone(),
            error: e.to_string(),
        }),
    }
}

/// Scores predictions in `pred_dir` against the manifest's ground truth.
pub fn evaluate_predictions(manifest_path: &Path, pred_dir: &Path, options: &EvaluateOptions) -> Result<EvaluationReport, DatasetError> {
    if options.regions.is_empty() {
        return Err(DatasetError::Invalid("no regions requested".into()));
    }
    if !pred_dir.is_dir() {
        return Err(DatasetError::Invalid(format!("prediction directory {} does not exist", pred_dir.display())));
    }
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = dataset_root(manifest_path);
    let entries: Vec<&ImageEntry> = manifest.entries_in(options.split).collect();
    let outcomes: Vec<Outcome> = entries.par_iter().map(|e| score_entry(&root, pred_dir, e, options)).collect();
    let mut report = EvaluationReport {
        method: options.method.clone(),
        split: options.split,
        regions: options.regions.clone(),
        images: Vec::new(),
        aggregate: Vec::new(),
        missing: Vec::new(),
        failures: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            Outcome::Scored(r) => report.images.push(r),
            Outcome::Missing(mut m) => report.missing.append(&mut m),
            Outcome::Failed(f) => {
                warn!(image = %f.id, error = %f.error, "evaluation failed");
                report.failures.push(f)
            }
        }
    }
    report.aggregate = aggregate(&report.images, &report.regions);
    info!(images = report.images.len(), missing = report.missing.len(), failures = report.failures.len(), "evaluation done");
    Ok(report)
}

/// Runs Retinex on every selected image, writes `(ref, sha)` PFM pairs into
/// `out_dir`, then evaluates them.
pub fn run_baseline(manifest_path: &Path, out_dir: &Path, params: &RetinexParams, options: &EvaluateOptions) -> Result<EvaluationReport, DatasetError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = dataset_root(manifest_path);
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let entries: Vec<&ImageEntry> = manifest.entries_in(options.split).collect();
    let failures: Vec<Failure> = entries
        .par_iter()
        .filter_map(|entry| {
            let (ref_name, sha_name) = prediction_paths(entry);
            let run = || -> Result<(), DatasetError> {
                // a stale pair from an earlier run must not stand in for a failed solve
                for name in [&ref_name, &sha_name] {
                    let path = out_dir.join(name);
                    if path.exists() {
                        fs::remove_file(&path).map_err(io_err(&path))?;
                    }
                }
                let image = load_pfm(&root.join(&entry.files.image))?;
                let est = retinex_decompose(&image, params)?;
                save_pfm(&out_dir.join(ref_name), &est.reflectance)?;
                save_pfm(&out_dir.join(sha_name), &est.shading)
            };
            run().err().map(|e| {
                warn!(image = %entry.image_id, error = %e, "baseline failed");
                Failure {
                    id: entry.image_id.clone(),
                    error: e.to_string(),
                }
            })
        })
        .collect();
    let mut report = evaluate_predictions(manifest_path, out_dir, options)?;
    // images whose solve failed show up as failures, not as missing files
    let failed: std::collections::HashSet<&str> = failures.iter().map(|f| f.id.as_str()).collect();
    report.missing.retain(|m| !failed.iter().any(|id| m.starts_with(&format!("{id}_"))));
    report.failures.extend(failures);
    report.failures.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub max_model_error: f32,
    pub failures: Vec<Failure>,
}

/// Re-checks every entry: stored product model within tolerance and, for
/// rendered entries, a spec hash that regenerates from the manifest seed.
pub fn verify_dataset(manifest_path: &Path) -> Result<VerifyReport, DatasetError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = dataset_root(manifest_path);
    let generator = SceneGenerator::new(manifest.config.generator.clone())?;
    let results: Vec<Result<f32, Failure>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let fail = |error: String| Failure {
                id: entry.image_id.clone(),
                error,
            };
            if entry.flags.source_image.is_none() {
                let spec = generator.generate(manifest.master_seed, entry.scene_index);
                if spec.spec_hash() != entry.spec_hash {
                    return Err(fail("spec hash does not match regenerated scene".into()));
                }
            }
            let (triple, _) = load_triple(&root, entry).map_err(|e| fail(e.to_string()))?;
            triple.verify().map_err(|e| fail(e.to_string()))
        })
        .collect();
    let mut report = VerifyReport::default();
    for r in results {
        report.checked += 1;
        match r {
            Ok(err) => report.max_model_error = report.max_model_error.max(err),
            Err(f) => report.failures.push(f),
        }
    }
    Ok(report)
}
