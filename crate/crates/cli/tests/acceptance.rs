//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Every tolerance is pinned below.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde_json::Value;
use sid_core::augment::chroma_rotate;
use sid_core::dataset::{load_triple, DatasetManifest};
use sid_core::geometry::{Ray, Vec3};
use sid_core::loss::intrinsic_loss_slices;
use sid_core::metrics::{lmse_with, LmseParams, SsimParams};
use sid_core::render::{brute_force_intersect, Bvh, PointLight, PreparedScene, Surface};
use sid_core::retinex::{solve_poisson, SolverParams};
use sid_core::rng::StreamRng;
use sid_core::scene::MaterialSpec;
use sid_core::{dssim, read_pfm, retinex_decompose, si_mse, ImageBuffer, LossWeights, Mask, RetinexParams};

const MODEL_TOL: f64 = 1e-6;
const GENERATE_50_BUDGET: Duration = Duration::from_secs(5 * 60);
const IRRADIANCE_REL_TOL: f64 = 1e-5;
const ALPHA_TOL: f64 = 1e-6;
const LMSE_TOL: f64 = 1e-9;
/// Scaled predictions are rounded to f32 before scoring, so equality is
/// checked to f32 storage precision.
const SCALE_REL_TOL: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-4;
const RETINEX_SANITY_TOL: f64 = 1e-3;
const POISSON_TOL: f64 = 1e-6;
const RETINEX_BAND: (f64, f64) = (0.01, 0.15);
const RETINEX_BUDGET: Duration = Duration::from_secs(15 * 60);

type Check = Result<String, String>;
type NamedCheck<'a> = (&'static str, Box<dyn FnOnce() -> Check + 'a>);

fn sid() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sid"));
    cmd.env("SID_LOG", "warn");
    cmd
}

/// Runs the CLI and returns its parsed stdout, failing on a non-zero exit.
fn run_sid(args: &[&str]) -> Result<Value, String> {
    let out = sid().args(args).output().map_err(|e| format!("spawning sid: {e}"))?;
    if !out.status.success() {
        return Err(format!("sid {} exited with {}: {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("stdout is not json: {e}"))
}

fn random_image(rng: &mut StreamRng, w: usize, h: usize, c: usize, lo: f64, hi: f64) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, c, |_, _, _| rng.uniform(lo, hi) as f32)
}

/// Every regular file under `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Largest |I - R*S| over every entry, with the product taken in f64.
fn max_model_error(manifest_path: &Path) -> Result<(f64, usize), String> {
    let manifest = DatasetManifest::load(manifest_path).map_err(|e| e.to_string())?;
    let root = manifest_path.parent().unwrap();
    let mut worst = 0.0f64;
    for entry in &manifest.entries {
        let img = read_pfm(root.join(&entry.files.image)).map_err(|e| e.to_string())?;
        let r = read_pfm(root.join(&entry.files.reflectance)).map_err(|e| e.to_string())?;
        let s = read_pfm(root.join(&entry.files.shading)).map_err(|e| e.to_string())?;
        for p in 0..img.pixel_count() {
            let sv = s.data()[p] as f64;
            for c in 0..3 {
                let e = (img.data()[3 * p + c] as f64 - r.data()[3 * p + c] as f64 * sv).abs();
                worst = worst.max(e);
            }
        }
    }
    Ok((worst, manifest.entries.len()))
}

fn model_fulfillment(data: &Path) -> Check {
    let out = data.to_str().unwrap();
    let start = Instant::now();
    run_sid(&["generate", "--seed", "11", "--scenes", "50", "--out", out])?;
    let elapsed = start.elapsed();
    let (worst, entries) = max_model_error(&data.join("manifest.json"))?;
    let detail = format!("{entries} triples, max |I-R*S| = {worst:.3e} (tol {MODEL_TOL:e}), 50 scenes in {:.0} s (budget {} s)", elapsed.as_secs_f64(), GENERATE_50_BUDGET.as_secs());
    if entries == 100 && worst <= MODEL_TOL && elapsed < GENERATE_50_BUDGET {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quad(corners: [Vec3; 4], surface: u32) -> [([Vec3; 3], u32); 2] {
    [([corners[0], corners[1], corners[2]], surface), ([corners[0], corners[2], corners[3]], surface)]
}

fn square_at(y: f64, half: f64, surface: u32) -> [([Vec3; 3], u32); 2] {
    quad(
        [Vec3::new(-half, y, -half), Vec3::new(half, y, -half), Vec3::new(half, y, half), Vec3::new(-half, y, half)],
        surface,
    )
}

fn analytic_irradiance() -> Check {
    let gray = MaterialSpec::homogeneous([0.5, 0.5, 0.5], 1.0);
    let surfaces = vec![Surface::flat(gray.clone(), false), Surface::flat(gray, true)];
    let mut rng = StreamRng::new(2, 0, 0);

    // unoccluded floor, no ambient: shading is phi cos / d^2
    let light = PointLight {
        position: Vec3::new(0.3, 2.0, -0.4),
        intensity: 5.0,
    };
    let scene = PreparedScene::new(square_at(0.0, 10.0, 0).to_vec(), surfaces.clone(), vec![light], 0.0);
    let eye = Vec3::new(0.0, 3.0, 3.0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let target = Vec3::new(rng.uniform(-3.0, 3.0), 0.0, rng.uniform(-3.0, 3.0));
        let dir = target - eye;
        let sample = scene.probe(&Ray::new(eye, dir), true).ok_or("probe ray missed the plane")?;
        let t = -eye.y / dir.y;
        let p = Vec3::new(eye.x + t * dir.x, 0.0, eye.z + t * dir.z);
        let to_light = light.position - p;
        let d2 = to_light.x * to_light.x + to_light.y * to_light.y + to_light.z * to_light.z;
        let expected = light.intensity * (to_light.y / d2.sqrt()) / d2;
        worst = worst.max((sample.shading - expected).abs() / expected);
    }

    // a square occluder halfway up: the shadow test is analytic
    let ambient = 0.1;
    let light = PointLight {
        position: Vec3::new(0.0, 2.0, 0.0),
        intensity: 5.0,
    };
    let mut tris = square_at(0.0, 10.0, 0).to_vec();
    tris.extend(square_at(1.0, 0.5, 1));
    let scene = PreparedScene::new(tris, surfaces, vec![light], ambient);
    let (mut shadowed, mut exact, mut lit_ok) = (0, 0, true);
    for _ in 0..1000 {
        let p = Vec3::new(rng.uniform(-1.5, 1.5), 0.0, rng.uniform(-1.5, 1.5));
        // the segment to the light crosses y = 1 at the midpoint
        let (qx, qz) = ((p.x + light.position.x) / 2.0, (p.z + light.position.z) / 2.0);
        let inside = qx.abs().max(qz.abs());
        if (inside - 0.5).abs() < 1e-3 {
            continue;
        }
        // look straight down from just above the floor so the occluder is not in view
        let sample = scene.probe(&Ray::new(p + Vec3::new(0.0, 0.5, 0.0), Vec3::new(0.0, -1.0, 0.0)), true).ok_or("probe ray missed")?;
        if inside < 0.5 {
            shadowed += 1;
            exact += (sample.shading == ambient) as usize;
        } else {
            lit_ok &= sample.shading > ambient;
        }
    }
    let detail = format!("max rel err {worst:.3e} over 1000 probes (tol {IRRADIANCE_REL_TOL:e}); {exact}/{shadowed} occluded points exactly ambient");
    if worst <= IRRADIANCE_REL_TOL && shadowed > 0 && exact == shadowed && lit_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bvh_oracle() -> Check {
    let mut mismatches = 0;
    let mut hits = 0;
    for scene in 0..20u64 {
        let mut rng = StreamRng::new(3, scene, 0);
        let count = 20 + rng.below(180) as usize;
        let tris: Vec<[Vec3; 3]> = (0..count)
            .map(|_| {
                let c = Vec3::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
                [0, 1, 2].map(|_| c + Vec3::new(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)))
            })
            .collect();
        let bvh = Bvh::build(tris);
        for _ in 0..1000 {
            let origin = Vec3::new(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
            let aim = Vec3::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            let ray = Ray::new(origin, aim - origin);
            let fast = bvh.intersect(&ray);
            let slow = brute_force_intersect(bvh.triangles(), &ray);
            hits += slow.is_some() as usize;
            if fast.map(|h| (h.t, h.triangle)) != slow.map(|h| (h.t, h.triangle)) {
                mismatches += 1;
            }
        }
    }
    let detail = format!("{mismatches} mismatches over 20000 rays ({hits} hits)");
    if mismatches == 0 && hits > 1000 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Golden-section minimization of the squared residual over alpha.
fn golden_alpha(gt: &ImageBuffer, pred: &ImageBuffer) -> f64 {
    let f = |a: f64| -> f64 { gt.data().iter().zip(pred.data()).map(|(&x, &y)| (x as f64 - a * y as f64).powi(2)).sum() };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-20.0f64, 20.0f64);
    for _ in 0..300 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    (lo + hi) / 2.0
}

/// Explicit window list: side round(0.1 max(w,h)), half-side step.
fn lmse_by_enumeration(gt: &ImageBuffer, pred: &ImageBuffer, mask: Option<&Mask>) -> f64 {
    let (w, h, c) = (gt.width(), gt.height(), gt.channels());
    let side = ((0.1 * w.max(h) as f64).round() as usize).max(1);
    let step = (side / 2).max(1);
    let starts = |len: usize| if side >= len { vec![0] } else { (0..=len - side).step_by(step).collect::<Vec<_>>() };
    let mut scores = Vec::new();
    for y0 in starts(h) {
        for x0 in starts(w) {
            let mut px = Vec::new();
            for y in y0..(y0 + side).min(h) {
                for x in x0..(x0 + side).min(w) {
                    if mask.is_none_or(|m| m.get(y * w + x)) {
                        px.push((x, y));
                    }
                }
            }
            if px.is_empty() {
                continue;
            }
            let (mut xy, mut yy) = (0.0, 0.0);
            for &(x, y) in &px {
                for k in 0..c {
                    xy += gt.get(x, y, k) as f64 * pred.get(x, y, k) as f64;
                    yy += (pred.get(x, y, k) as f64).powi(2);
                }
            }
            let a = if yy > 0.0 { xy / yy } else { 0.0 };
            let sse: f64 = px
                .iter()
                .flat_map(|&(x, y)| (0..c).map(move |k| (x, y, k)))
                .map(|(x, y, k)| (gt.get(x, y, k) as f64 - a * pred.get(x, y, k) as f64).powi(2))
                .sum();
            scores.push(sse / px.len() as f64);
        }
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn metric_oracles() -> Check {
    let mut rng = StreamRng::new(4, 0, 0);
    let mut alpha_err = 0.0f64;
    let mut lmse_err = 0.0f64;
    for i in 0..50 {
        let (w, h) = (8 + rng.below(40) as usize, 8 + rng.below(40) as usize);
        let c = if i % 2 == 0 { 3 } else { 1 };
        let gt = random_image(&mut rng, w, h, c, 0.0, 1.0);
        let pred = random_image(&mut rng, w, h, c, 0.0, 2.0);
        let fit = si_mse(&gt, &pred, None).map_err(|e| e.to_string())?;
        alpha_err = alpha_err.max((fit.alpha_hat - golden_alpha(&gt, &pred)).abs());
        let mask = Mask::new(w, h, (0..w * h).map(|_| rng.unit() < 0.6).collect()).unwrap();
        for m in [None, Some(&mask)] {
            let got = lmse_with(&gt, &pred, m, &LmseParams::default()).map_err(|e| e.to_string())?;
            lmse_err = lmse_err.max((got - lmse_by_enumeration(&gt, &pred, m)).abs());
        }
    }
    let params = SsimParams::default();
    let (mut self_max, mut lo, mut hi) = (0.0f64, f64::MAX, f64::MIN);
    for i in 0..1000 {
        let (w, h) = (4 + rng.below(20) as usize, 4 + rng.below(20) as usize);
        let c = if i % 3 == 0 { 1 } else { 3 };
        let x = random_image(&mut rng, w, h, c, 0.0, 1.0);
        // every fourth pair is anti-correlated to push towards the upper end
        let y = if i % 4 == 0 { x.map(|v| 1.0 - v) } else { random_image(&mut rng, w, h, c, 0.0, 1.0) };
        self_max = self_max.max(dssim(&x, &x, &params).map_err(|e| e.to_string())?);
        let d = dssim(&x, &y, &params).map_err(|e| e.to_string())?;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let detail = format!(
        "alpha err {alpha_err:.2e} (tol {ALPHA_TOL:e}), lmse err {lmse_err:.2e} (tol {LMSE_TOL:e}), max dssim(x,x) {self_max:e}, dssim range [{lo:.4}, {hi:.4}] on 1000 pairs"
    );
    if alpha_err <= ALPHA_TOL && lmse_err <= LMSE_TOL && self_max == 0.0 && lo >= 0.0 && hi <= 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scale_invariance() -> Check {
    let mut rng = StreamRng::new(5, 0, 0);
    let mut worst = 0.0f64;
    let mut unit_exact = true;
    for _ in 0..20 {
        let gt = random_image(&mut rng, 32, 24, 3, 0.0, 1.0);
        let pred = random_image(&mut rng, 32, 24, 3, 0.0, 1.0);
        let base = si_mse(&gt, &pred, None).map_err(|e| e.to_string())?.residual_mse;
        for k in [0.1f32, 1.0, 7.3] {
            let scaled = si_mse(&gt, &pred.map(|v| v * k), None).map_err(|e| e.to_string())?.residual_mse;
            if k == 1.0 {
                unit_exact &= scaled == base;
            }
            worst = worst.max((scaled - base).abs() / base);
        }
    }
    let detail = format!("max rel change {worst:.2e} for k in {{0.1, 1, 7.3}} (tol {SCALE_REL_TOL:e}), k=1 bit-exact: {unit_exact}");
    if worst <= SCALE_REL_TOL && unit_exact {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn loss_gradients() -> Check {
    let weights_pool = [[1.0, 1.0, 1.0], [0.5, 2.0, 0.0], [0.0, 0.0, 3.0], [1.5, 0.2, 0.7]];
    let mut worst = 0.0f64;
    let h = 1e-5;
    for inst in 0..100u64 {
        let mut rng = StreamRng::new(6, inst, 0);
        let n = 1 + rng.below(12) as usize;
        let mut v = |len: usize, lo: f64, hi: f64| -> Vec<f64> { (0..len).map(|_| rng.uniform(lo, hi)).collect() };
        let r = v(3 * n, 0.05, 1.0);
        let s = v(n, 0.1, 3.0);
        let image: Vec<f64> = (0..3 * n).map(|k| r[k] * s[k / 3]).collect();
        let pr = v(3 * n, 0.0, 1.2);
        let ps = v(n, 0.0, 3.0);
        let [a1, a2, a3] = weights_pool[inst as usize % weights_pool.len()];
        let w = LossWeights { alpha1: a1, alpha2: a2, alpha3: a3 };
        let f = |pr: &[f64], ps: &[f64]| intrinsic_loss_slices(&image, &r, &s, pr, ps, &w).unwrap().total;
        let value = intrinsic_loss_slices(&image, &r, &s, &pr, &ps, &w).map_err(|e| e.to_string())?;
        let mut compare = |analytic: f64, numeric: f64| {
            let scale = analytic.abs().max(numeric.abs());
            // both vanish when the relevant weight is zero
            if scale > 1e-9 {
                worst = worst.max((analytic - numeric).abs() / scale);
            } else {
                worst = worst.max((analytic - numeric).abs());
            }
        };
        for k in 0..3 * n {
            let (mut plus, mut minus) = (pr.clone(), pr.clone());
            plus[k] += h;
            minus[k] -= h;
            compare(value.grad_reflectance[k], (f(&plus, &ps) - f(&minus, &ps)) / (2.0 * h));
        }
        for k in 0..n {
            let (mut plus, mut minus) = (ps.clone(), ps.clone());
            plus[k] += h;
            minus[k] -= h;
            compare(value.grad_shading[k], (f(&pr, &plus) - f(&pr, &minus)) / (2.0 * h));
        }
    }
    let detail = format!("max element-wise rel err {worst:.2e} over 100 instances (tol {GRAD_REL_TOL:e})");
    if worst < GRAD_REL_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Blocky reflectance from a small palette times a slow shading bump.
fn constructed_scene(seed: u64) -> (ImageBuffer, ImageBuffer) {
    let palette = [[0.8, 0.2, 0.2], [0.2, 0.7, 0.3], [0.3, 0.3, 0.9], [0.9, 0.85, 0.4], [0.15, 0.15, 0.15], [0.6, 0.6, 0.6]];
    let (w, h, block) = (64, 64, 16);
    let mut rng = StreamRng::new(7, seed, 0);
    let cells: Vec<usize> = (0..(w / block) * (h / block)).map(|_| rng.below(palette.len() as u64) as usize).collect();
    let (cx, cy) = (rng.uniform(0.0, w as f64), rng.uniform(0.0, h as f64));
    let reflectance = ImageBuffer::from_fn(w, h, 3, |x, y, c| palette[cells[(y / block) * (w / block) + x / block]][c] as f32);
    let shading = ImageBuffer::from_fn(w, h, 1, |x, y, _| {
        let d2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (w as f64 * w as f64);
        (0.4 + 0.5 * (-2.0 * d2).exp()) as f32
    });
    (reflectance, shading)
}

fn retinex_sanity() -> Check {
    let mut worst_ref = 0.0f64;
    for seed in 0..10 {
        let (r, s) = constructed_scene(seed);
        let image = sid_core::image::multiply_broadcast(&r, &s).unwrap();
        let est = retinex_decompose(&image, &RetinexParams::default()).map_err(|e| e.to_string())?;
        worst_ref = worst_ref.max(si_mse(&r, &est.reflectance, None).map_err(|e| e.to_string())?.residual_mse);
    }

    // the default stopping rule is a 1e-6 relative residual, which bounds
    // the residual, not the distance to the exact solution; the oracle
    // comparison runs the solver to a tight residual and reports both
    let tight = SolverParams {
        tolerance: 1e-12,
        ..SolverParams::default()
    };
    let (mut worst_poisson, mut worst_default) = (0.0f64, 0.0f64);
    let (w, h) = (8, 8);
    let n = w * h;
    for seed in 0..20 {
        let mut rng = StreamRng::new(8, seed, 0);
        let gx: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let gy: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        // least squares on forward differences, pinned to zero mean by 11^T
        let mut d = DMatrix::<f64>::zeros(2 * n, n);
        let mut g = DVector::<f64>::zeros(2 * n);
        let mut row = 0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                for (ok, j, val) in [(x + 1 < w, i + 1, gx[i]), (y + 1 < h, i + w, gy[i])] {
                    if ok {
                        d[(row, i)] = -1.0;
                        d[(row, j)] = 1.0;
                        g[row] = val;
                        row += 1;
                    }
                }
            }
        }
        let normal = d.transpose() * &d + DMatrix::<f64>::from_element(n, n, 1.0);
        let dense = normal.lu().solve(&(d.transpose() * &g)).ok_or("dense system is singular")?;
        let sol = solve_poisson(w, h, &gx, &gy, &tight).map_err(|e| e.to_string())?;
        let default = solve_poisson(w, h, &gx, &gy, &SolverParams::default()).map_err(|e| e.to_string())?;
        for i in 0..n {
            worst_poisson = worst_poisson.max((sol.field[i] - dense[i]).abs());
            worst_default = worst_default.max((default.field[i] - dense[i]).abs());
        }
    }
    let detail = format!(
        "reflectance si_mse max {worst_ref:.2e} on 10 constructed images (tol {RETINEX_SANITY_TOL:e}); Poisson vs dense 8x8 max diff {worst_poisson:.2e} (tol {POISSON_TOL:e}; {worst_default:.2e} at the default stopping rule)"
    );
    if worst_ref < RETINEX_SANITY_TOL && worst_poisson <= POISSON_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn row_value(aggregate: &Value, target: &str, key: &str) -> Option<f64> {
    aggregate
        .as_array()?
        .iter()
        .find(|r| r["region"] == "whole" && r["target"] == target)?[key]
        .as_f64()
}

/// Extends the 50-scene dataset to 200 scenes and scores Retinex on all of it.
fn retinex_on_dataset(data: &Path, work: &Path) -> Check {
    let start = Instant::now();
    let out = data.to_str().unwrap();
    let summary = run_sid(&["generate", "--seed", "11", "--scenes", "200", "--out", out])?;
    let manifest = data.join("manifest.json");
    let pred = work.join("retinex");
    let report = run_sid(&["baseline", "--manifest", manifest.to_str().unwrap(), "--split", "all", "--regions", "whole", "--out", pred.to_str().unwrap()])?;
    let elapsed = start.elapsed();
    let images = report["images"].as_u64().unwrap_or(0);
    let ref_mse = row_value(&report["aggregate"], "reflectance", "mse").ok_or("no reflectance row")?;
    let sha_mse = row_value(&report["aggregate"], "shading", "mse").ok_or("no shading row")?;
    let in_band = |v: f64| (RETINEX_BAND.0..=RETINEX_BAND.1).contains(&v);
    let detail = format!(
        "{images} images from 200 scenes ({} reused): reflectance MSE {ref_mse:.4}, shading MSE {sha_mse:.4} (band [{}, {}]), {:.0} s (budget {} s)",
        summary["skipped"],
        RETINEX_BAND.0,
        RETINEX_BAND.1,
        elapsed.as_secs_f64(),
        RETINEX_BUDGET.as_secs()
    );
    if images == 400 && in_band(ref_mse) && in_band(sha_mse) && elapsed < RETINEX_BUDGET {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism(work: &Path) -> Check {
    let mut trees = Vec::new();
    for (name, jobs) in [("first", "8"), ("second", "8"), ("serial", "1")] {
        let out = work.join(name);
        run_sid(&["--jobs", jobs, "generate", "--seed", "7", "--scenes", "4", "--out", out.to_str().unwrap()])?;
        trees.push(tree(&out));
    }
    let files = trees[0].len();
    let rerun = trees[0] == trees[1];
    let jobs = trees[0] == trees[2];
    let detail = format!("{files} files; rerun identical: {rerun}; --jobs 1 vs 8 identical: {jobs}");
    if files > 0 && rerun && jobs {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn augmentation(work: &Path) -> Check {
    // reuses the seed-7 dataset from the determinism check; generate skips
    // complete scenes, so this is a no-op after it
    run_sid(&["generate", "--seed", "7", "--scenes", "4", "--out", work.join("first").to_str().unwrap()])?;
    let manifest_path = work.join("first/manifest.json");
    let manifest = DatasetManifest::load(&manifest_path).map_err(|e| e.to_string())?;
    let root = work.join("first");
    let (mut identity, mut shading_same, mut worst) = (true, true, 0.0f64);
    for entry in &manifest.entries {
        let (triple, _) = load_triple(&root, entry).map_err(|e| e.to_string())?;
        let zero = chroma_rotate(&triple, 0.0).map_err(|e| e.to_string())?;
        identity &= zero.triple == triple && !zero.clamped;
        for angle in [0.0, 0.7, -2.1, std::f64::consts::PI] {
            let aug = chroma_rotate(&triple, angle).map_err(|e| e.to_string())?.triple;
            shading_same &= aug.shading.data().iter().map(|v| v.to_bits()).eq(triple.shading.data().iter().map(|v| v.to_bits()));
            for p in 0..aug.image.pixel_count() {
                let s = aug.shading.data()[p] as f64;
                for c in 0..3 {
                    worst = worst.max((aug.image.data()[3 * p + c] as f64 - aug.reflectance.data()[3 * p + c] as f64 * s).abs());
                }
            }
        }
    }
    // and through the CLI: shading files are copied bit for bit
    let out = work.join("augmented");
    run_sid(&["augment", "--manifest", manifest_path.to_str().unwrap(), "--angles", "0,-1.2", "--split", "all", "--out", out.to_str().unwrap()])?;
    let augmented = DatasetManifest::load(&out.join("manifest.json")).map_err(|e| e.to_string())?;
    for entry in &augmented.entries {
        let source = manifest
            .entries
            .iter()
            .find(|e| Some(&e.image_id) == entry.flags.source_image.as_ref())
            .ok_or("augmented entry without source")?;
        shading_same &= fs::read(out.join(&entry.files.shading)).unwrap() == fs::read(root.join(&source.files.shading)).unwrap();
    }
    let detail = format!(
        "{} triples x 4 angles: angle 0 identity {identity}, shading bit-identical {shading_same}, max |I-R*S| {worst:.2e} (tol {MODEL_TOL:e}); {} CLI outputs",
        manifest.entries.len(),
        augmented.entries.len()
    );
    if identity && shading_same && worst <= MODEL_TOL && augmented.entries.len() == 2 * manifest.entries.len() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let data = work.path().join("dataset");
    let checks: Vec<NamedCheck> = vec![
        ("model fulfillment", Box::new(|| model_fulfillment(&data))),
        ("analytic irradiance", Box::new(analytic_irradiance)),
        ("bvh oracle", Box::new(bvh_oracle)),
        ("metric oracles", Box::new(metric_oracles)),
        ("scale invariance", Box::new(scale_invariance)),
        ("loss gradients", Box::new(loss_gradients)),
        ("retinex sanity", Box::new(retinex_sanity)),
        ("retinex on generated data", Box::new(|| retinex_on_dataset(&data, work.path()))),
        ("determinism", Box::new(|| determinism(work.path()))),
        ("augmentation", Box::new(|| augmentation(work.path()))),
    ];
    // comma-separated check names, for rerunning a subset
    let only: Option<Vec<String>> = std::env::var("SID_ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let (mut passed, mut failed) = (0, 0);
    for (name, check) in checks {
        if only.as_ref().is_some_and(|o| !o.iter().any(|n| n == name)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS {name}: {detail}");
            }
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
