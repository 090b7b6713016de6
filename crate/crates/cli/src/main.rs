//! Command-line front end: synthetic dataset generation, training,
//! cross-validation, evaluation and CAM export.
//!
//! Exit codes: 0 on success; on failure the error category decides the
//! code (2 usage, 3 format, 4 numeric, 5 data, 6 io), so scripts can
//! distinguish a corrupt checkpoint from a missing file.

use clap::{Parser, Subcommand};
use lesionattn::checkpoint::{peek_precision, Checkpoint};
use lesionattn::data::folds::stratified_holdout;
use lesionattn::data::netpbm::load_ppm;
use lesionattn::data::synth::{write_dataset, GenConfig};
use lesionattn::data::{load_dataset, Sample};
use lesionattn::error::{Error, Result};
use lesionattn::heatmap::{render_sample, write_heatmap_pgm, write_overlay_ppm};
use lesionattn::rng::derive_seed;
use lesionattn::train::{cross_validate, epoch_csv, evaluate, train};
use lesionattn::{BoundingBox, JaccardVariant, Scalar, TrainConfig};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lesionattn", version, about = "CAM-guided attention-loss training for lesion classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic lesion dataset with a controllable
    /// artifact-label correlation.
    GenData {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of samples.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Square image side in pixels (at least 32).
        #[arg(long, default_value_t = 64)]
        side: usize,
        /// Fraction of melanoma (positive) samples, in (0,1).
        #[arg(long, default_value_t = 0.3)]
        mel_frac: f64,
        /// Probability that artifact presence copies the label, in [0,1];
        /// 0.5 makes artifacts independent of labels.
        #[arg(long, default_value_t = 0.9)]
        artifact_corr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a classifier, writing the best checkpoint and a per-epoch
    /// CSV log (checkpoint path plus ".csv").
    Train {
        /// Dataset directory produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Attention-loss weight in [0,1]; 0 trains the plain baseline.
        #[arg(long, default_value_t = 0.66)]
        lambda: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 6)]
        batch: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        /// Early-stopping patience in epochs.
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overlap formula: the paper's literal denominator or the
        /// standard Jaccard one.
        #[arg(long, default_value = "standard")]
        jaccard: String,
        /// Weight element width in bits (32 or 64).
        #[arg(long, default_value_t = 32)]
        precision: u8,
    },
    /// Stratified k-fold cross-validation; writes a JSON report.
    CrossValidate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0.66)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report output path (JSON).
        #[arg(long)]
        report: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset; writes a JSON report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Export the class activation map for one image as a PGM heatmap,
    /// optionally with a PPM overlay.
    Cam {
        #[arg(long)]
        ckpt: PathBuf,
        /// Input image (binary PPM).
        #[arg(long)]
        image: PathBuf,
        /// Lesion bounding box as X_MIN,Y_MIN,X_MAX,Y_MAX in image pixels.
        #[arg(long)]
        r#box: String,
        /// Heatmap output path (PGM).
        #[arg(long)]
        out: PathBuf,
        /// Optional overlay output path (PPM).
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { out, n, side, mel_frac, artifact_corr, seed } => {
            let config = GenConfig {
                n_samples: n,
                image_side: side,
                melanoma_fraction: mel_frac,
                artifact_correlation: artifact_corr,
                seed,
                ..GenConfig::default()
            };
            write_dataset(&config, &out)?;
            println!("wrote {n} samples ({side}x{side}) to {}", out.display());
            Ok(())
        }
        Command::Train { data, out, lambda, epochs, batch, lr, patience, seed, jaccard, precision } => {
            let config = TrainConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                patience,
                lambda,
                seed,
                precision,
                jaccard: jaccard.parse::<JaccardVariant>()?,
                ..TrainConfig::default()
            };
            match precision {
                32 => run_train::<f32>(&data, &out, config),
                64 => run_train::<f64>(&data, &out, config),
                other => Err(Error::Config(format!("precision must be 32 or 64, got {other}"))),
            }
        }
        Command::CrossValidate { data, folds, lambda, seed, report } => {
            let config = TrainConfig { lambda, seed, ..TrainConfig::default() };
            let samples = load_dataset::<f32>(&data)?;
            let cv = cross_validate(&samples, folds, &config)?;
            write_json(&report, &cv)?;
            println!(
                "{folds}-fold AUC median {:.4}, mean {:.4}, std {:.4}; report at {}",
                cv.auc_summary.median,
                cv.auc_summary.mean,
                cv.auc_summary.std,
                report.display()
            );
            Ok(())
        }
        Command::Eval { ckpt, data, report } => match peek_precision(&ckpt)? {
            64 => run_eval::<f64>(&ckpt, &data, &report),
            _ => run_eval::<f32>(&ckpt, &data, &report),
        },
        Command::Cam { ckpt, image, r#box, out, overlay } => match peek_precision(&ckpt)? {
            64 => run_cam::<f64>(&ckpt, &image, &r#box, &out, overlay.as_deref()),
            _ => run_cam::<f32>(&ckpt, &image, &r#box, &out, overlay.as_deref()),
        },
    }
}

/// Training holds out a stratified 10% validation slice for early
/// stopping; the checkpoint stores the best-epoch weights.
fn run_train<T: Scalar>(data: &Path, out: &Path, config: TrainConfig) -> Result<()> {
    let samples = load_dataset::<T>(data)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let (tr_idx, va_idx) = stratified_holdout(&labels, 0.1, derive_seed(config.seed, &[11]))?;
    let tr: Vec<Sample<T>> = tr_idx.iter().map(|&i| samples[i].clone()).collect();
    let va: Vec<Sample<T>> = va_idx.iter().map(|&i| samples[i].clone()).collect();
    let (checkpoint, logs) = train(&tr, &va, &config)?;
    checkpoint.save(out)?;
    let log_path = PathBuf::from(format!("{}.csv", out.display()));
    fs::write(&log_path, epoch_csv(&logs)).map_err(|e| Error::Io { path: log_path.clone(), source: e })?;
    println!(
        "best epoch {} (val AUC {:.4}); checkpoint at {}, log at {}",
        checkpoint.meta.epoch,
        checkpoint.meta.best_val_auc,
        out.display(),
        log_path.display()
    );
    Ok(())
}

fn run_eval<T: Scalar>(ckpt: &Path, data: &Path, report: &Path) -> Result<()> {
    let checkpoint = Checkpoint::<T>::load(ckpt)?;
    let net = checkpoint.restore()?;
    let samples = load_dataset::<T>(data)?;
    let result = evaluate(&net, &samples, checkpoint.meta.config.batch_size)?;
    write_json(report, &result)?;
    match result.auc {
        Some(a) => println!("AUC {a:.4} over {} samples; report at {}", result.n_samples, report.display()),
        None => println!("AUC undefined (single class) over {} samples; report at {}", result.n_samples, report.display()),
    }
    Ok(())
}

fn run_cam<T: Scalar>(
    ckpt: &Path,
    image: &Path,
    box_spec: &str,
    out: &Path,
    overlay: Option<&Path>,
) -> Result<()> {
    let checkpoint = Checkpoint::<T>::load(ckpt)?;
    let net = checkpoint.restore()?;
    let tensor = load_ppm::<T>(image)?;
    let bbox = parse_box(box_spec)?;
    let shape = tensor.shape().to_vec();
    bbox.validate_in_frame(shape[2] as f64, shape[1] as f64)?;
    let id = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    // The label is irrelevant for CAM export; the sample only carries
    // the image and its lesion box through preprocessing.
    let sample = Sample { id, image: tensor, label: 0, bbox, has_artifact: false };
    let visual = render_sample(&net, &sample)?;
    write_heatmap_pgm(&visual.heat, out)?;
    if let Some(path) = overlay {
        write_overlay_ppm(&visual, path)?;
    }
    println!("wrote CAM heatmap to {}", out.display());
    Ok(())
}

fn parse_box(spec: &str) -> Result<BoundingBox> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Config(format!(
            "--box expects X_MIN,Y_MIN,X_MAX,Y_MAX, got {spec:?}"
        )));
    }
    let mut vals = [0.0f64; 4];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("--box coordinate {p:?} is not a number")))?;
    }
    BoundingBox::new(vals[0], vals[1], vals[2], vals[3])
}

/// Reports serialize from fixed-order structs, so key order is stable
/// across runs; a trailing newline keeps the files diff-friendly.
fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}
