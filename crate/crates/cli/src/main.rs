//! `sid`: generate, evaluate and baseline synthetic intrinsic-image datasets.
//!
//! Exit codes: 0 success, 1 partial failure, 2 invalid input. Logs go to
//! stderr as JSON lines; command results go to stdout as JSON.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing::info;

use sid_core::dataset::{self, DatasetConfig, DatasetError, EvaluateOptions, EvaluationReport, Split};
use sid_core::image::read_pfm;
use sid_core::loss::{intrinsic_loss, LossWeights};
use sid_core::metrics::Region;
use sid_core::retinex::RetinexParams;

const EXIT_PARTIAL: u8 = 1;
const EXIT_INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "sid", version, about = "Synthetic intrinsic-image dataset toolkit")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SID_JOBS")]
    jobs: Option<usize>,
    /// Log filter, e.g. `info` or `sid_core=debug`.
    #[arg(long, global = true, default_value = "info", env = "SID_LOG")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset (resumes if files already exist).
    Generate(GenerateArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Run a baseline decomposer on the test split and score it.
    Baseline(BaselineArgs),
    /// Write chromaticity-rotated copies of a dataset.
    Augment(AugmentArgs),
    /// Intrinsic loss of one prediction, as JSON.
    Loss(LossArgs),
    /// Re-check spec hashes and the product model of every entry.
    VerifyGt(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    scenes: u64,
    #[arg(long)]
    out: PathBuf,
    /// Dataset config JSON; unspecified fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's samples per pixel.
    #[arg(long)]
    spp: Option<u32>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// train, test or all.
    #[arg(long, default_value = "test")]
    split: String,
    /// Comma-separated subset of whole,fg,bg.
    #[arg(long, default_value = "whole,fg,bg")]
    regions: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    select: SelectArgs,
    /// Directory holding `<image_id>_ref.pfm` and `<image_id>_sha.pfm`.
    #[arg(long)]
    pred: PathBuf,
    /// Report JSON; a CSV with the same stem is written next to it.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[arg(long, default_value = "prediction")]
    method: String,
    #[arg(long)]
    verify_gt: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    select: SelectArgs,
    #[arg(long, default_value = "retinex")]
    method: String,
    /// Output directory for predictions and report.{json,csv}.
    #[arg(long)]
    out: PathBuf,
    /// Log-gradient threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Classify by luminance only.
    #[arg(long)]
    gray: bool,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated rotation angles in radians.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    angles: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    /// train, test or all.
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    reflectance: PathBuf,
    #[arg(long)]
    shading: PathBuf,
    #[arg(long)]
    pred_reflectance: PathBuf,
    #[arg(long)]
    pred_shading: PathBuf,
    /// Three comma-separated weights for the reflectance, shading and product terms.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    weights: Vec<f64>,
    /// Include the gradients in the JSON output.
    #[arg(long)]
    gradients: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    manifest: PathBuf,
}

/// Error carrying the exit code it should map to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        error: error.into(),
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let code = if e.is_invalid_input() { EXIT_INVALID } else { EXIT_PARTIAL };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: EXIT_PARTIAL, error }
    }
}

fn parse_split(s: &str) -> Result<Option<Split>, Failure> {
    match s {
        "all" => Ok(None),
        _ => Split::parse(s)
            .map(Some)
            .ok_or_else(|| invalid(anyhow::anyhow!("unknown split {s:?}, expected train, test or all"))),
    }
}

fn parse_regions(s: &str) -> Result<Vec<Region>, Failure> {
    s.split(',')
        .map(|r| Region::parse(r.trim()).ok_or_else(|| invalid(anyhow::anyhow!("unknown region {r:?}, expected whole, fg or bg"))))
        .collect()
}

fn options(select: &SelectArgs, method: &str, verify_gt: bool) -> Result<EvaluateOptions, Failure> {
    Ok(EvaluateOptions {
        split: parse_split(&select.split)?,
        regions: parse_regions(&select.regions)?,
        verify_gt,
        method: method.to_string(),
    })
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json value serializes"));
}

fn save_report(report: &EvaluationReport, json_path: &Path) -> Result<PathBuf, Failure> {
    report.save_json(json_path)?;
    let csv_path = json_path.with_extension("csv");
    report.save_csv(&csv_path)?;
    Ok(csv_path)
}

fn report_status(report: &EvaluationReport) -> Result<(), Failure> {
    if report.is_complete() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_PARTIAL,
            error: anyhow::anyhow!("{} missing prediction files, {} failed images", report.missing.len(), report.failures.len()),
        })
    }
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => DatasetConfig::from_json_file(path)?,
        None => DatasetConfig::default(),
    };
    if let Some(spp) = args.spp {
        config.samples_per_pixel = spp;
    }
    config.validate()?;
    info!(seed = args.seed, scenes = args.scenes, out = %args.out.display(), "generating");
    let summary = dataset::generate_dataset(&args.out, args.seed, args.scenes, &config)?;
    print(serde_json::to_value(&summary).expect("summary serializes"));
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow::anyhow!("{} scenes failed", summary.failures.len()).into())
    }
}

fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let opts = options(&args.select, &args.method, args.verify_gt)?;
    let report = dataset::evaluate_predictions(&args.select.manifest, &args.pred, &opts)?;
    let csv = save_report(&report, &args.out)?;
    print(json!({
        "report": args.out,
        "csv": csv,
        "images": report.images.len(),
        "missing": report.missing,
        "failures": report.failures,
        "aggregate": report.aggregate,
    }));
    report_status(&report)
}

fn baseline(args: BaselineArgs) -> Result<(), Failure> {
    if args.method != "retinex" {
        return Err(invalid(anyhow::anyhow!("unknown baseline {:?}, only retinex is available", args.method)));
    }
    let mut params = RetinexParams::default();
    if let Some(t) = args.threshold {
        if t.is_nan() || t < 0.0 {
            return Err(invalid(anyhow::anyhow!("threshold must be non-negative")));
        }
        params.gradient_threshold = t;
    }
    params.use_chromaticity = !args.gray;
    let opts = options(&args.select, &args.method, false)?;
    let report = dataset::run_baseline(&args.select.manifest, &args.out, &params, &opts)?;
    let csv = save_report(&report, &args.out.join("report.json"))?;
    print(json!({
        "report": args.out.join("report.json"),
        "csv": csv,
        "images": report.images.len(),
        "failures": report.failures,
        "aggregate": report.aggregate,
    }));
    report_status(&report)
}

fn augment(args: AugmentArgs) -> Result<(), Failure> {
    let split = parse_split(&args.split)?;
    let summary = dataset::augment_dataset(&args.manifest, &args.angles, &args.out, split)?;
    print(serde_json::to_value(&summary).expect("summary serializes"));
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow::anyhow!("{} images failed", summary.failures.len()).into())
    }
}

fn loss(args: LossArgs) -> Result<(), Failure> {
    let [alpha1, alpha2, alpha3] = args.weights[..] else {
        return Err(invalid(anyhow::anyhow!("--weights needs exactly three values")));
    };
    let weights = LossWeights { alpha1, alpha2, alpha3 };
    let read = |p: &PathBuf| read_pfm(p).with_context(|| format!("reading {}", p.display())).map_err(invalid);
    let value = intrinsic_loss(
        &read(&args.image)?,
        &read(&args.reflectance)?,
        &read(&args.shading)?,
        &read(&args.pred_reflectance)?,
        &read(&args.pred_shading)?,
        &weights,
    )
    .map_err(invalid)?;
    let mut out = json!({
        "total": value.total,
        "l_ref": value.l_ref,
        "l_sha": value.l_sha,
        "l_rs": value.l_rs,
        "weights": weights,
    });
    if args.gradients {
        out["grad_reflectance"] = json!(value.grad_reflectance);
        out["grad_shading"] = json!(value.grad_shading);
    }
    print(out);
    Ok(())
}

fn verify_gt(args: VerifyArgs) -> Result<(), Failure> {
    let report = dataset::verify_dataset(&args.manifest)?;
    print(serde_json::to_value(&report).expect("report serializes"));
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow::anyhow!("{} entries failed verification", report.failures.len()).into())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Baseline(a) => baseline(a),
        Command::Augment(a) => augment(a),
        Command::Loss(a) => loss(a),
        Command::VerifyGt(a) => verify_gt(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_current_span(false)
        .init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_INVALID);
        }
        pool = pool.num_threads(jobs);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_PARTIAL);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            tracing::error!(error = %format!("{:#}", f.error), "command failed");
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
