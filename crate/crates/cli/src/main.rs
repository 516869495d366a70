//! Command-line front end for the camomap toolkit.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation or content failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "camomap",
    version,
    about = "Camouflage-map toolkit: dual-stream mask fusion, evaluation metrics, copy-paste augmentation, visual-difference analysis, and gradient checks"
)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for batch commands (0 = machine default). Outputs are
    /// identical for any worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse main and mirror detection files into camouflage maps.
    Fuse {
        /// JSON-lines detection file of the main stream.
        #[arg(long = "main")]
        main_file: PathBuf,
        /// JSON-lines detection file of the mirror stream.
        #[arg(long = "mirror")]
        mirror_file: PathBuf,
        /// Dataset manifest CSV (id,image,gt,split).
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for <id>.png maps and <id>_trace.json files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate predicted maps against ground-truth maps.
    Eval {
        /// Directory of predicted grayscale PNG maps.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth PNG maps with matching stems.
        #[arg(long)]
        gt: PathBuf,
        /// 'adaptive' or 'fixed:<value>'.
        #[arg(long, default_value = "adaptive")]
        threshold: String,
        /// 'camo' or 'full'; recorded in the report.
        #[arg(long, default_value = "full")]
        split: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Copy-paste instance augmentation over an image/mask directory pair.
    Augment {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Maximum pastes per instance.
        #[arg(long = "per-instance")]
        per_instance: Option<usize>,
        /// Color tolerance override (mean per-channel RGB distance).
        #[arg(long)]
        tolerance: Option<f64>,
        /// Seed for paste-mode choices.
        #[arg(long)]
        seed: Option<u64>,
        /// Surround ring width override, in pixels.
        #[arg(long)]
        margin: Option<usize>,
    },
    /// Foreground/background visual difference per image.
    Visdiff {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        /// rgb, lab, texton, or features:PATH (directory of <id>.bin files).
        #[arg(long)]
        space: String,
        /// 'none' or 'horizontal'.
        #[arg(long, default_value = "none")]
        flip: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        /// Random cases for the box-gradient suite.
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
}

fn load_config(cli: &Cli) -> camomap::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> camomap::Result<()> {
    let mut cfg = load_config(&cli)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| camomap::Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fuse {
            main_file,
            mirror_file,
            manifest,
            out,
        } => commands::fuse::run(&main_file, &mirror_file, &manifest, &out, &cfg),
        Command::Eval {
            pred,
            gt,
            threshold,
            split,
            out,
        } => commands::eval::run(&pred, &gt, &threshold, &split, &out, &cfg),
        Command::Augment {
            images,
            masks,
            out,
            per_instance,
            tolerance,
            seed,
            margin,
        } => {
            if let Some(n) = per_instance {
                cfg.augment.placements_per_instance = n;
            }
            if let Some(t) = tolerance {
                cfg.augment.color_tolerance = t;
            }
            if let Some(m) = margin {
                cfg.augment.surround_margin = m;
            }
            let seed = seed.unwrap_or(cfg.seed);
            commands::augment::run(&images, &masks, &out, seed, &cfg)
        }
        Command::Visdiff {
            images,
            masks,
            space,
            flip,
            out,
        } => commands::visdiff::run(&images, &masks, &space, &flip, &out, &cfg),
        Command::Gradcheck { seed, cases } => {
            let seed = seed.unwrap_or(cfg.seed);
            commands::gradcheck::run(seed, cases)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
