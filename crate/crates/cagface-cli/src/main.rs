mod commands;
mod config;
mod verify;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Two-stage 4x face super-resolution pipeline.
#[derive(Parser)]
#[command(name = "cagface", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a dataset directory and write the train/test/val split manifest.
    Prepare {
        /// Directory holding images/*.png and masks/*.mask.png
        #[arg(long)]
        data_dir: PathBuf,
        /// Split shuffle seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Manifest output path (default: <data-dir>/manifest.tsv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; writes config echo, CSV log, and checkpoints to the run directory.
    Train {
        /// Split manifest from `prepare`
        #[arg(long)]
        manifest: PathBuf,
        /// Dataset directory the manifest paths are relative to
        #[arg(long)]
        data_dir: PathBuf,
        /// Optional TOML config file; CLI flags override its values
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory (default: runs/<timestamp>)
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Training phase
        #[arg(long, value_parser = ["stage1-only", "stage2-after-init", "joint"])]
        phase: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// LR patch size (multiple of 4); equal to the LR size trains whole-face
        #[arg(long)]
        patch: Option<usize>,
        /// Patches sampled per training image
        #[arg(long)]
        per_image: Option<usize>,
        #[arg(long)]
        features: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
        /// Stage-1 checkpoint for the stage2-after-init phase
        #[arg(long)]
        stage1_checkpoint: Option<PathBuf>,
        /// Full published configuration (F=256, L=16, 48 patches/image)
        #[arg(long)]
        paper_scale: bool,
    },
    /// Run a trained model on one LR image.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// LR input PNG
        #[arg(long)]
        image: PathBuf,
        /// Component mask PNG (default: <image stem>.mask.png beside the image)
        #[arg(long)]
        mask: Option<PathBuf>,
        /// whole: one forward pass; tiled: overlapping patches
        #[arg(long, default_value = "whole", value_parser = ["whole", "tiled"])]
        mode: String,
        /// Tile size at LR scale (tiled mode)
        #[arg(long, default_value_t = 64)]
        patch: usize,
        /// Tile stride at LR scale (tiled mode)
        #[arg(long, default_value_t = 32)]
        stride: usize,
        /// Raised-cosine tile blending instead of uniform averaging
        #[arg(long)]
        raised_cosine: bool,
        /// 4x output PNG path (default: <image stem>.sr.png)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the 2x intermediate image here (whole mode only)
        #[arg(long)]
        intermediate: Option<PathBuf>,
        /// Write the bicubic 4x baseline instead of running the network
        #[arg(long)]
        baseline_bicubic: bool,
    },
    /// Compare two directories of paired PNGs with PSNR/SSIM/MS-SSIM/FID.
    Eval {
        #[arg(long)]
        dir_a: PathBuf,
        #[arg(long)]
        dir_b: PathBuf,
        /// Also write per-image rows to this CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the self-verification suites; nonzero exit on any failure.
    Verify {
        /// Restrict to one suite
        #[arg(long, value_parser = ["grad", "roundtrip", "counts", "metrics", "checkpoint", "all"], default_value = "all")]
        suite: String,
    },
    /// Train a sweep over network sizes plus the single-stage ablation.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        /// Comma-separated feature widths
        #[arg(long, default_value = "64")]
        features: String,
        /// Comma-separated ResBlock counts
        #[arg(long, default_value = "4")]
        blocks: String,
        /// Include the single-stage 4x variant at each size
        #[arg(long)]
        single_stage: bool,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run directory (default: runs/<timestamp>)
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare { data_dir, seed, out } => commands::prepare(&data_dir, seed, out),
        Command::Train {
            manifest,
            data_dir,
            config,
            run_dir,
            phase,
            steps,
            batch,
            lr,
            seed,
            patch,
            per_image,
            features,
            blocks,
            stage1_checkpoint,
            paper_scale,
        } => commands::train(commands::TrainArgs {
            manifest,
            data_dir,
            config,
            run_dir,
            phase,
            steps,
            batch,
            lr,
            seed,
            patch,
            per_image,
            features,
            blocks,
            stage1_checkpoint,
            paper_scale,
        }),
        Command::Infer {
            checkpoint,
            image,
            mask,
            mode,
            patch,
            stride,
            raised_cosine,
            out,
            intermediate,
            baseline_bicubic,
        } => commands::infer(commands::InferArgs {
            checkpoint,
            image,
            mask,
            mode,
            patch,
            stride,
            raised_cosine,
            out,
            intermediate,
            baseline_bicubic,
        }),
        Command::Eval { dir_a, dir_b, csv } => commands::eval(&dir_a, &dir_b, csv),
        Command::Verify { suite } => verify::run(&suite),
        Command::Ablate { manifest, data_dir, features, blocks, single_stage, steps, patch, seed, run_dir } => {
            commands::ablate(&manifest, &data_dir, &features, &blocks, single_stage, steps, patch, seed, run_dir)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
