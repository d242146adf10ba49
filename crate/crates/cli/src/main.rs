//! `ofx` — batch entry points for the off-axis iris toolkit.
//!
//! Subcommands: ingest | augment | split | train | finetune | eval |
//! complexity. All randomness flows from an explicit `--seed`; identical
//! invocations produce byte-identical artifacts. Log verbosity comes from
//! the `OFX_LOG` environment variable (error, warn, info, debug).

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ofx", version, about = "Off-axis iris data synthesis, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair source images with masks and resize them to the working resolution.
    Ingest(IngestArgs),
    /// Build the randomized augmented dataset from an ingested manifest.
    Augment(AugmentArgs),
    /// Reassign train/val/test splits of a manifest in place.
    Split(SplitArgs),
    /// Train the segmentation network from scratch.
    Train(TrainArgs),
    /// Continue training from a checkpoint at the reduced learning rate.
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint on one split and emit the metrics report.
    Eval(EvalArgs),
    /// Print the parameter/storage/MAC accounting of the network.
    Complexity(ComplexityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Png,
    Pgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Near-infrared capture: threshold 0.55.
    Nir,
    /// Visible-light capture: threshold 0.4.
    Visible,
}

/// "HxW", e.g. 120x160.
#[derive(Debug, Clone, Copy)]
pub struct SizeArg {
    pub height: usize,
    pub width: usize,
}

fn parse_size(s: &str) -> Result<SizeArg, String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got '{s}'"))?;
    let height = h.trim().parse().map_err(|_| format!("bad height '{h}'"))?;
    let width = w.trim().parse().map_err(|_| format!("bad width '{w}'"))?;
    if height == 0 || width == 0 {
        return Err("size must be at least 1x1".into());
    }
    Ok(SizeArg { height, width })
}

fn parse_multipliers(s: &str) -> Result<[u32; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected off_axis,unconstrained,combined, got '{s}'"));
    }
    let mut out = [0u32; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| format!("bad count '{part}'"))?;
    }
    Ok(out)
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected train,val,test ratios, got '{s}'"));
    }
    let mut out = [0.0f64; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| format!("bad ratio '{part}'"))?;
    }
    Ok(out)
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of source eye images (.png or .pgm).
    #[arg(long)]
    images: PathBuf,
    /// Directory of masks paired by filename stem.
    #[arg(long)]
    masks: PathBuf,
    /// Output directory; receives images/, masks/ and manifest.csv.
    #[arg(long)]
    out: PathBuf,
    /// Working resolution.
    #[arg(long, value_parser = parse_size, default_value = "120x160")]
    target_size: SizeArg,
    /// File format of the normalized outputs.
    #[arg(long, value_enum, default_value = "png")]
    format: FormatArg,
}

#[derive(Args)]
struct AugmentArgs {
    /// Ingested manifest of source pairs.
    #[arg(long)]
    manifest: PathBuf,
    /// JSON build configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep only originals and off-axis passes.
    #[arg(long)]
    visible_light: bool,
    /// Pass counts per source: off_axis,unconstrained,combined.
    #[arg(long, value_parser = parse_multipliers)]
    multipliers: Option<[u32; 3]>,
    #[arg(long, value_parser = parse_size)]
    target_size: Option<SizeArg>,
    /// Split ratios train,val,test.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<[f64; 3]>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads (default: all cores). Output is identical for any value.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_ratios, default_value = "0.7,0.2,0.1")]
    ratios: [f64; 3],
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainCommonArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the checkpoint and loss history.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learning rate override (defaults: 1e-4 train, 5e-5 finetune).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: TrainCommonArgs,
    /// Network depth.
    #[arg(long, default_value_t = 10)]
    layers: usize,
    /// Hidden channel width.
    #[arg(long, default_value_t = 32)]
    channels: usize,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: TrainCommonArgs,
    /// Checkpoint to continue from (architecture comes from the file).
    #[arg(long)]
    from: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Capture mode; sets the default threshold.
    #[arg(long, value_enum, default_value = "nir")]
    mode: ModeArg,
    /// Explicit threshold override.
    #[arg(long)]
    threshold: Option<f64>,
    /// Which split to evaluate.
    #[arg(long, default_value = "test")]
    split: String,
    /// Write the JSON report here as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Input size the MAC count is evaluated at.
    #[arg(long, value_parser = parse_size, default_value = "120x160")]
    input: SizeArg,
    #[arg(long, default_value_t = 10)]
    layers: usize,
    #[arg(long, default_value_t = 32)]
    channels: usize,
}

fn init_workers(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // ignore failure: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OFX_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::Augment(args) => {
            init_workers(args.jobs);
            commands::augment(args)
        }
        Command::Split(args) => commands::split(args),
        Command::Train(args) => {
            init_workers(args.common.jobs);
            commands::train(args)
        }
        Command::Finetune(args) => {
            init_workers(args.common.jobs);
            commands::finetune(args)
        }
        Command::Eval(args) => {
            init_workers(args.jobs);
            commands::eval(args)
        }
        Command::Complexity(args) => commands::complexity(args),
    };
    match outcome {
        Ok(warnings) => {
            if warnings > 0 {
                log::warn!("finished with {warnings} warning(s)");
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
