use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use firesr::dataset::YearMonth;
use firesr::evaluation::Pooling;
use firesr::training::LossTarget;
use firesr::ErrorCategory;

mod commands;
mod config;
mod record;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] firesr::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Usage => 1,
                ErrorCategory::Data => 2,
                ErrorCategory::Numeric => 3,
                ErrorCategory::Io => 4,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "firesr", version, about = "Fire-exposure map super-resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Super-resolution factor: 2, 4 or 8.
    #[arg(long, value_parser = ["2", "4", "8"])]
    scale: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Normalized fire value above which a pixel counts as fire.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        months: Option<usize>,
        /// HR width in pixels.
        #[arg(long)]
        width: Option<usize>,
        /// HR height in pixels.
        #[arg(long)]
        height: Option<usize>,
        /// First month, YYYY-MM.
        #[arg(long)]
        start: Option<YearMonth>,
        /// Comma-separated region labels.
        #[arg(long, value_delimiter = ',')]
        regions: Option<Vec<String>>,
    },
    /// Build a dataset from monthly FSR or CSV rasters.
    BuildDataset {
        #[command(flatten)]
        common: Common,
        /// Directory with one subdirectory per region.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train a network on a dataset's train and val splits.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        /// HR crop side; 0 trains on full images.
        #[arg(long)]
        crop: Option<usize>,
        /// Compute the loss on the raw network output instead of the
        /// clamped one.
        #[arg(long)]
        raw_loss: bool,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Write checkpoint.fsc with the final optimizer state.
        #[arg(long)]
        checkpoint: bool,
    },
    /// Score networks, or stored predictions, against the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Weights file; repeat to compare several networks.
        #[arg(long)]
        weights: Vec<PathBuf>,
        /// Directory of `<sample id>.fsr` predictions to score.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Add rows per region and for all regions combined.
        #[arg(long)]
        by_region: bool,
        /// Average metrics over images instead of pooling all pixels.
        #[arg(long)]
        per_image: bool,
        /// Sample id to render as a target | FireSRnet | bicubic strip.
        #[arg(long)]
        triptych: Vec<String>,
    },
    /// Super-resolve LR channels or coarse climate-model fields.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        lr_fire: Option<PathBuf>,
        #[arg(long)]
        lr_temp_dev: Option<PathBuf>,
        #[arg(long)]
        lr_burnable: Option<PathBuf>,
        #[arg(long)]
        coarse_fire: Option<PathBuf>,
        /// Coarse temperature deviation in degrees.
        #[arg(long)]
        coarse_temp_dev: Option<PathBuf>,
        /// Burnable index for the coarse path.
        #[arg(long)]
        burnable: Option<PathBuf>,
        /// LR grid for the coarse path, WIDTHxHEIGHT.
        #[arg(long, value_parser = parse_dims)]
        lr_dims: Option<(usize, usize)>,
        /// Divisor bringing the coarse fire channel into [0, 1].
        #[arg(long)]
        fire_divisor: Option<f64>,
    },
    /// Write first-layer filters as PGM images.
    ExportFilters {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// One image per input channel instead of the channel mean.
        #[arg(long)]
        per_channel: bool,
    },
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w = w.parse().map_err(|e| format!("width: {e}"))?;
    let h = h.parse().map_err(|e| format!("height: {e}"))?;
    Ok((w, h))
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn base_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, c.seed);
    if let Some(s) = &c.scale {
        cfg.scale = Some(s.parse().expect("clap restricts the values"));
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    if c.threads.is_some() {
        cfg.threads = c.threads;
    }
    set(&mut cfg.threshold, c.threshold);
    Ok(cfg)
}

/// Config file, then flags; returns the subcommand name and merged config.
fn merge(cmd: Command) -> Result<(&'static str, RunConfig), CliError> {
    Ok(match cmd {
        Command::Synth {
            common,
            months,
            width,
            height,
            start,
            regions,
        } => {
            let mut cfg = base_config(&common)?;
            let s = &mut cfg.synth;
            set(&mut s.months, months);
            set(&mut s.width, width);
            set(&mut s.height, height);
            set(&mut s.start, start);
            set(&mut s.regions, regions);
            ("synth", cfg)
        }
        Command::BuildDataset { common, input } => {
            let mut cfg = base_config(&common)?;
            if input.is_some() {
                cfg.build.input = input;
            }
            ("build-dataset", cfg)
        }
        Command::Train {
            common,
            dataset,
            epochs,
            batch_size,
            lr,
            patience,
            crop,
            raw_loss,
            resume,
            checkpoint,
        } => {
            let mut cfg = base_config(&common)?;
            let t = &mut cfg.train;
            if dataset.is_some() {
                t.dataset = dataset;
            }
            if resume.is_some() {
                t.resume = resume;
            }
            t.checkpoint |= checkpoint;
            let p = &mut t.params;
            set(&mut p.max_epochs, epochs);
            set(&mut p.batch_size, batch_size);
            set(&mut p.learning_rate, lr);
            set(&mut p.patience, patience);
            if let Some(c) = crop {
                p.crop_size = (c > 0).then_some(c);
            }
            if raw_loss {
                p.loss_on = LossTarget::Raw;
            }
            p.seed = cfg.seed;
            ("train", cfg)
        }
        Command::Evaluate {
            common,
            dataset,
            weights,
            predictions,
            by_region,
            per_image,
            triptych,
        } => {
            let mut cfg = base_config(&common)?;
            let e = &mut cfg.evaluate;
            if dataset.is_some() {
                e.dataset = dataset;
            }
            if !weights.is_empty() {
                e.weights = weights;
            }
            if predictions.is_some() {
                e.predictions = predictions;
            }
            e.by_region |= by_region;
            if per_image {
                e.pooling = Pooling::PerImage;
            }
            if !triptych.is_empty() {
                e.triptych = triptych;
            }
            ("evaluate", cfg)
        }
        Command::Infer {
            common,
            weights,
            lr_fire,
            lr_temp_dev,
            lr_burnable,
            coarse_fire,
            coarse_temp_dev,
            burnable,
            lr_dims,
            fire_divisor,
        } => {
            let mut cfg = base_config(&common)?;
            let i = &mut cfg.infer;
            for (slot, v) in [
                (&mut i.weights, weights),
                (&mut i.lr_fire, lr_fire),
                (&mut i.lr_temp_dev, lr_temp_dev),
                (&mut i.lr_burnable, lr_burnable),
                (&mut i.coarse_fire, coarse_fire),
                (&mut i.coarse_temp_dev, coarse_temp_dev),
                (&mut i.burnable, burnable),
            ] {
                if v.is_some() {
                    *slot = v;
                }
            }
            if lr_dims.is_some() {
                i.lr_dims = lr_dims;
            }
            if fire_divisor.is_some() {
                i.coarse.fire_divisor = fire_divisor;
            }
            i.coarse.normalization = cfg.normalization;
            ("infer", cfg)
        }
        Command::ExportFilters {
            common,
            weights,
            per_channel,
        } => {
            let mut cfg = base_config(&common)?;
            if weights.is_some() {
                cfg.export_filters.weights = weights;
            }
            if per_channel {
                cfg.export_filters.mode = firesr::model::FilterExportMode::PerChannel;
            }
            ("export-filters", cfg)
        }
    })
}

fn run(cmd: Command) -> Result<(), CliError> {
    let (name, cfg) = merge(cmd)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match name {
        "synth" => commands::synth(&cfg),
        "build-dataset" => commands::build_dataset(&cfg),
        "train" => commands::train(&cfg),
        "evaluate" => commands::evaluate(&cfg),
        "infer" => commands::infer(&cfg),
        "export-filters" => commands::export_filters(&cfg),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
