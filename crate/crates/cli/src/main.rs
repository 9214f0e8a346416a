//! `splat4d` command-line interface.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 verification failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use splat4d::camera::Camera;
use splat4d::decaynet::DecayVariant;
use splat4d::gradcheck::all_suites;
use splat4d::image::Image;
use splat4d::io::{load_checkpoint, save_checkpoint, write_ppm};
use splat4d::scenegen::{build_dataset, Dataset, PresetKind, RigSpec, ScenePreset, Split};
use splat4d::trainer::{ablation_arms, train, LogRecord, Model, TrainConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "splat4d", version, about = "4D Gaussian splatting with learned opacity decay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ground-truth scene and render its dataset.
    GenScene {
        #[arg(long, default_value = "orbit")]
        preset: PresetKind,
        /// Training cameras (the same number of held-out cameras is added).
        #[arg(long, default_value_t = 4)]
        cams: usize,
        /// Arc span of the training cameras, degrees.
        #[arg(long, default_value_t = 110.0)]
        span: f64,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        /// Square image size in pixels.
        #[arg(long, default_value_t = 96)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// TOML training config; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's decay variant.
        #[arg(long)]
        decay: Option<DecayVariant>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics log, one JSON record per line (default: `<out>.log.jsonl`).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Render one view of a checkpoint.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        /// Camera from the dataset manifest (requires --data).
        #[arg(long, conflicts_with = "pose", requires = "data")]
        camera_id: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Camera as a JSON document.
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write expected depth, scaled so the farthest pixel is white.
        #[arg(long)]
        depth: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against one split of a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Tab-separated per-frame report with a final mean row.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        dssim_halved: bool,
    },
    /// Train every decay variant plus a no-visibility run and report each.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks; fails with exit code 4.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failure raised after a check ran to completion and did not pass.
#[derive(Debug)]
struct VerificationFailed(String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return EXIT_VERIFY;
    }
    match err.downcast_ref::<splat4d::Error>() {
        Some(e) => core_exit_code(e),
        None => EXIT_DATA,
    }
}

fn core_exit_code(err: &splat4d::Error) -> u8 {
    use splat4d::Error::*;
    match err {
        Usage(_) | InvalidParameter(_) | InvalidCamera(_) => EXIT_USAGE,
        Training { source, .. } => core_exit_code(source),
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Core errors already render their cause; avoid repeating it.
            match e.downcast_ref::<splat4d::Error>() {
                Some(core) => eprintln!("error: {core}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenScene { preset, cams, span, frames, size, seed, out } => {
            let preset = ScenePreset { frames, ..ScenePreset::new(preset) };
            let rig = RigSpec {
                n_train_cameras: cams,
                n_test_cameras: cams,
                span_deg: span,
                width: size,
                height: size,
                ..RigSpec::default()
            };
            let manifest = build_dataset(&preset, &rig, seed, &out)?;
            println!("wrote {} frames from {} cameras to {}", manifest.frames.len(), manifest.cameras.len(), out.display());
        }
        Command::Train { data, config, decay, iterations, seed, out, log } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(v) = decay {
                cfg.decay.variant = v;
            }
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            let dataset = Dataset::load(&data)?;
            let log = log.unwrap_or_else(|| suffixed(&out, ".log.jsonl"));
            train_to(&dataset, cfg, &out, &log)?;
        }
        Command::Render { ckpt, camera_id, data, pose, time, out, depth } => {
            let model = Model::from_checkpoint(&load_checkpoint(&ckpt)?)?;
            let camera = match (camera_id, data, pose) {
                (Some(id), Some(data), None) => {
                    let dataset = Dataset::load(&data)?;
                    dataset.manifest.camera(id)?.clone()
                }
                (None, _, Some(pose)) => {
                    let text = std::fs::read_to_string(&pose).with_context(|| pose.display().to_string())?;
                    let camera: Camera = serde_json::from_str(&text)
                        .map_err(|e| splat4d::Error::usage(format!("{}: {e}", pose.display())))?;
                    camera
                }
                _ => return Err(splat4d::Error::usage("exactly one of --camera-id (with --data) or --pose is required").into()),
            };
            let output = model.render_output(&camera, time)?;
            write_ppm(&out, &output.color)?;
            if let Some(path) = depth {
                write_ppm(&path, &depth_image(&output.color, &output.depth))?;
            }
        }
        Command::Eval { ckpt, data, split, report, dssim_halved } => {
            let model = Model::from_checkpoint(&load_checkpoint(&ckpt)?)?;
            let dataset = Dataset::load(&data)?;
            let metrics = model.evaluate(&dataset, split, dssim_halved)?;
            let tsv = metrics.to_tsv();
            match report {
                Some(path) => std::fs::write(&path, &tsv).with_context(|| path.display().to_string())?,
                None => print!("{tsv}"),
            }
            let m = metrics.mean();
            println!("mean psnr {:.3} dB, dssim1 {:.5}, dssim2 {:.5}", m.psnr, m.dssim1, m.dssim2);
        }
        Command::Ablate { data, config, seed, out } => {
            let mut base = load_config(config.as_deref())?;
            if let Some(s) = seed {
                base.rng_seed = s;
            }
            let dataset = Dataset::load(&data)?;
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            let scratch = tempdir_in(&out)?;
            println!("arm\tpsnr_db\tdssim1\tdssim2\tdistractors_gt_0.1");
            for (name, cfg) in ablation_arms(&base) {
                let ckpt = scratch.join(format!("{name}.ckpt"));
                let log = scratch.join(format!("{name}.log.jsonl"));
                let trainer = train_to(&dataset, cfg, &ckpt, &log)?;
                let metrics = trainer.model()?.evaluate(&dataset, Split::Test, trainer.cfg.dssim_halved)?;
                let path = out.join(format!("{name}.tsv"));
                std::fs::write(&path, metrics.to_tsv()).with_context(|| path.display().to_string())?;
                let m = metrics.mean();
                println!("{name}\t{:.3}\t{:.5}\t{:.5}\t{}", m.psnr, m.dssim1, m.dssim2, trainer.surviving_distractors(0.1));
            }
            std::fs::remove_dir_all(&scratch).with_context(|| scratch.display().to_string())?;
        }
        Command::Gradcheck { seed } => {
            let reports = all_suites(seed)?;
            let mut failed = Vec::new();
            for r in &reports {
                for c in &r.classes {
                    println!(
                        "{:<20} {:<18} n={:<6} max_rel={:.3e} max_abs={:.3e} max_grad={:.3e} failures={}",
                        r.suite, c.class, c.count, c.max_rel, c.max_abs, c.max_magnitude, c.failures
                    );
                }
                if !r.passed() {
                    failed.push(r.suite.clone());
                }
            }
            if !failed.is_empty() {
                return Err(VerificationFailed(format!("gradient check failed: {}", failed.join(", "))).into());
            }
            println!("all gradient checks passed");
        }
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
            TrainConfig::from_toml(&text)
                .map_err(|e| splat4d::Error::usage(format!("{}: {e}", path.display())).into())
        }
    }
}

fn train_to(dataset: &Dataset, cfg: TrainConfig, ckpt: &Path, log: &Path) -> Result<splat4d::TrainerF> {
    let file = File::create(log).with_context(|| log.display().to_string())?;
    let mut writer = BufWriter::new(file);
    let trainer = train(dataset, cfg, |record: &LogRecord| {
        let line = serde_json::to_string(record).expect("log record serializes");
        writeln!(writer, "{line}").map_err(|e| splat4d::Error::Io { path: log.to_path_buf(), source: e })
    })?;
    writer.flush().with_context(|| log.display().to_string())?;
    save_checkpoint(ckpt, &trainer.checkpoint())?;
    Ok(trainer)
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn tempdir_in(dir: &Path) -> Result<PathBuf> {
    let path = dir.join(".ablate-work");
    if path.exists() {
        bail!("{} already exists; remove it first", path.display());
    }
    std::fs::create_dir(&path).with_context(|| path.display().to_string())?;
    Ok(path)
}

/// Grey-scale depth, normalized by the largest depth in the image.
fn depth_image(color: &Image<f64>, depth: &[f64]) -> Image<f64> {
    let max = depth.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let mut out = Image::new(color.width, color.height);
    for (i, d) in depth.iter().enumerate() {
        let v = d * scale;
        out.data[3 * i..3 * i + 3].copy_from_slice(&[v, v, v]);
    }
    out
}
