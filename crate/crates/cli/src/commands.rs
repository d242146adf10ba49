//! Subcommand implementations. Each returns the number of warnings it
//! logged; hard failures bubble up as errors and set a nonzero exit code.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use ofx_core::eval::{self, MetricsReport};
use ofx_core::fcn::checkpoint::{load_checkpoint, save_checkpoint};
use ofx_core::fcn::train::{train as run_training, TrainConfig, TrainOutcome, TrainSample};
use ofx_core::fcn::{
    canonical_network, forward, sequential_network, ComplexityReport, NetworkParameters, Tensor,
};
use ofx_core::imaging::{io, resize, resize_mask, ResizeMethod};
use ofx_core::pipeline::{
    build_dataset, composition_audit, split_dataset, AugmentationPlan, BuildConfig,
    DatasetManifest, ManifestRecord, Multipliers, OutputFormat, SeedPolicy, Split, SubsetTag,
};

use crate::{
    AugmentArgs, ComplexityArgs, EvalArgs, FinetuneArgs, FormatArg, IngestArgs, ModeArg, SplitArgs,
    TrainArgs, TrainCommonArgs,
};

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Png => OutputFormat::Png,
            FormatArg::Pgm => OutputFormat::Pgm,
        }
    }
}

fn supported_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut stems = BTreeMap::new();
    let entries =
        fs::read_dir(dir).with_context(|| format!("cannot read directory {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let is_supported = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"));
        if !is_supported {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            stems.insert(stem.to_string(), path.clone());
        }
    }
    Ok(stems)
}

pub fn ingest(args: IngestArgs) -> Result<usize> {
    log::info!(
        "resolved config: images={} masks={} out={} target={}x{} format={:?}",
        args.images.display(),
        args.masks.display(),
        args.out.display(),
        args.target_size.height,
        args.target_size.width,
        args.format
    );
    let images = supported_stems(&args.images)?;
    let masks = supported_stems(&args.masks)?;
    let ext = OutputFormat::from(args.format).extension();

    let mut warnings = 0usize;
    for stem in images.keys() {
        if !masks.contains_key(stem) {
            log::warn!("image '{stem}' has no mask; skipped");
            warnings += 1;
        }
    }
    for stem in masks.keys() {
        if !images.contains_key(stem) {
            log::warn!("mask '{stem}' has no image; skipped");
            warnings += 1;
        }
    }

    let (th, tw) = (args.target_size.height, args.target_size.width);
    let mut records = Vec::new();
    for (stem, image_path) in &images {
        let Some(mask_path) = masks.get(stem) else {
            continue;
        };
        let image = io::load_image(image_path)?;
        let mask = io::load_mask(mask_path)?;
        let image = if image.height() == th && image.width() == tw {
            image
        } else {
            resize(&image, th, tw, ResizeMethod::Bilinear)?
        };
        let mask = if mask.height() == th && mask.width() == tw {
            mask
        } else {
            resize_mask(&mask, th, tw)?
        };
        let out_image = args.out.join("images").join(format!("{stem}.{ext}"));
        let out_mask = args.out.join("masks").join(format!("{stem}.{ext}"));
        io::save_image(&out_image, &image)?;
        io::save_mask(&out_mask, &mask)?;
        records.push(ManifestRecord {
            sample_id: stem.clone(),
            source_id: stem.clone(),
            image_path: out_image,
            mask_path: out_mask,
            subset: SubsetTag::Original,
            split: Split::Train,
            plan: AugmentationPlan::original(stem.clone()),
        });
    }
    if records.is_empty() {
        bail!("no image/mask pairs found");
    }

    let manifest = DatasetManifest { records };
    let manifest_path = args.out.join("manifest.csv");
    manifest.write_csv(&manifest_path)?;
    println!(
        "ingested {} pair(s) into {} ({} skipped)",
        manifest.len(),
        manifest_path.display(),
        warnings
    );
    Ok(warnings)
}

fn load_build_config(args: &AugmentArgs) -> Result<BuildConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("invalid config {}", path.display()))?
        }
        None => {
            let out = args
                .out
                .clone()
                .context("either --config or --out is required")?;
            BuildConfig::new(args.seed.unwrap_or(0), out)
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if args.visible_light {
        config.visible_light_mode = true;
    }
    if let Some([off_axis, unconstrained, combined]) = args.multipliers {
        config.multipliers = Multipliers {
            off_axis,
            unconstrained,
            combined,
        };
    }
    if let Some(size) = args.target_size {
        config.target_size = [size.height, size.width];
    }
    if let Some(ratios) = args.ratios {
        config.split_ratios = ratios;
    }
    if let Some(format) = args.format {
        config.image_format = format.into();
    }
    Ok(config)
}

pub fn augment(args: AugmentArgs) -> Result<usize> {
    let sources = DatasetManifest::read_csv(&args.manifest)?;
    let config = load_build_config(&args)?;
    log::info!(
        "resolved config: {}",
        serde_json::to_string(&config).unwrap_or_default()
    );

    let output = build_dataset(&sources, &config)?;
    let manifest_path = config.output_dir.join("manifest.csv");
    output.manifest.write_csv(&manifest_path)?;

    println!("composition audit ({} records):", output.manifest.len());
    println!("  {:<42} {:>9} {:>9} {:>8}", "augmentation", "actual %", "target %", "count");
    for row in composition_audit(&output.manifest) {
        println!(
            "  {:<42} {:>8.2}% {:>8.1}% {:>8}",
            row.label, row.actual_pct, row.expected_pct, row.count
        );
    }
    println!("manifest: {}", manifest_path.display());
    for source in &output.skipped_sources {
        log::warn!("skipped source {source}");
    }
    Ok(output.skipped_sources.len())
}

pub fn split(args: SplitArgs) -> Result<usize> {
    let mut manifest = DatasetManifest::read_csv(&args.manifest)?;
    split_dataset(&mut manifest, args.ratios, &SeedPolicy::new(args.seed))?;
    manifest.write_csv(&args.manifest)?;
    let count = |s: Split| manifest.split_records(s).count();
    println!(
        "split {} records: train {} / val {} / test {}",
        manifest.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test)
    );
    Ok(0)
}

fn load_split_samples(manifest: &DatasetManifest, split: Split) -> Result<Vec<TrainSample>> {
    manifest
        .split_records(split)
        .map(|r| {
            Ok(TrainSample {
                image: io::load_image(&r.image_path)?,
                mask: io::load_mask(&r.mask_path)?,
            })
        })
        .collect()
}

fn write_loss_csv(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "step,train_mse,val_mse")?;
    for rec in &outcome.history {
        match rec.val_mse {
            Some(v) => writeln!(file, "{},{},{}", rec.step, rec.train_mse, v)?,
            None => writeln!(file, "{},{},", rec.step, rec.train_mse)?,
        }
    }
    Ok(())
}

fn run_and_save(
    initial: NetworkParameters,
    config: TrainConfig,
    manifest: &DatasetManifest,
    out_dir: &Path,
) -> Result<usize> {
    let train_set = load_split_samples(manifest, Split::Train)?;
    let val_set = load_split_samples(manifest, Split::Val)?;
    println!(
        "training on {} sample(s), validating on {}, learning rate {:e}",
        train_set.len(),
        val_set.len(),
        config.lr
    );

    let outcome = run_training(initial, &train_set, &val_set, &config)?;

    fs::create_dir_all(out_dir)?;
    let ckpt_path = out_dir.join("model.ckpt");
    save_checkpoint(&ckpt_path, &outcome.params, Some(&outcome.adam))?;
    let loss_path = out_dir.join("loss.csv");
    write_loss_csv(&loss_path, &outcome)?;

    let last = outcome.history.last();
    println!(
        "finished after {} step(s); final train MSE {:.6}; best val MSE {}",
        last.map_or(0, |r| r.step),
        last.map_or(f64::NAN, |r| r.train_mse),
        outcome
            .best_val_mse
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}")),
    );
    println!("checkpoint: {}", ckpt_path.display());
    println!("loss history: {}", loss_path.display());
    Ok(0)
}

fn train_config(common: &TrainCommonArgs, base: TrainConfig) -> TrainConfig {
    TrainConfig {
        lr: common.lr.unwrap_or(base.lr),
        batch_size: common.batch_size,
        max_epochs: common.max_epochs,
        patience: common.patience,
        seed: common.seed,
        ..base
    }
}

pub fn train(args: TrainArgs) -> Result<usize> {
    let manifest = DatasetManifest::read_csv(&args.common.manifest)?;
    let config = train_config(&args.common, TrainConfig::training(args.common.seed));
    log::info!(
        "resolved config: lr={:e} batch={} epochs={} patience={} seed={} layers={} channels={}",
        config.lr,
        config.batch_size,
        config.max_epochs,
        config.patience,
        config.seed,
        args.layers,
        args.channels
    );
    let specs = if args.layers == 10 && args.channels == 32 {
        canonical_network()
    } else {
        sequential_network(args.layers, args.channels)?
    };
    let initial = NetworkParameters::glorot(specs, args.common.seed);
    run_and_save(initial, config, &manifest, &args.common.out)
}

pub fn finetune(args: FinetuneArgs) -> Result<usize> {
    let manifest = DatasetManifest::read_csv(&args.common.manifest)?;
    let config = train_config(&args.common, TrainConfig::fine_tuning(args.common.seed));
    log::info!(
        "resolved config: from={} lr={:e} batch={} epochs={} patience={} seed={}",
        args.from.display(),
        config.lr,
        config.batch_size,
        config.max_epochs,
        config.patience,
        config.seed
    );
    let (initial, _) = load_checkpoint(&args.from)?;
    println!("continuing from {}", args.from.display());
    run_and_save(initial, config, &manifest, &args.common.out)
}

pub fn eval(args: EvalArgs) -> Result<usize> {
    let manifest = DatasetManifest::read_csv(&args.manifest)?;
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let threshold = args.threshold.unwrap_or(match args.mode {
        ModeArg::Nir => eval::NIR_THRESHOLD,
        ModeArg::Visible => eval::VISIBLE_THRESHOLD,
    });
    let split = match args.split.as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => bail!("unknown split '{other}'"),
    };
    log::info!(
        "resolved config: checkpoint={} mode={:?} threshold={} split={}",
        args.checkpoint.display(),
        args.mode,
        threshold,
        args.split
    );

    let records: Vec<&ManifestRecord> = manifest.split_records(split).collect();
    if records.is_empty() {
        bail!("split '{}' has no records", args.split);
    }
    let per_image = records
        .par_iter()
        .map(|r| {
            let image = io::load_image(&r.image_path)?;
            let truth = io::load_mask(&r.mask_path)?;
            let input = Tensor::from_image_normalized(&image);
            let (prob, _) = forward(&params, &input)?;
            let pred = eval::binarize(&prob, threshold)?;
            let counts = eval::confusion(&pred, &truth)?;
            Ok(eval::metrics(&counts))
        })
        .collect::<ofx_core::Result<Vec<_>>>()?;

    let report: MetricsReport = eval::aggregate(&per_image)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, json.as_bytes())?;
        log::info!("report written to {}", path.display());
    }
    Ok(0)
}

pub fn complexity(args: ComplexityArgs) -> Result<usize> {
    let specs = if args.layers == 10 && args.channels == 32 {
        canonical_network()
    } else {
        sequential_network(args.layers, args.channels)?
    };
    let report = ComplexityReport::for_network(&specs, args.input.height, args.input.width);
    println!("network complexity");
    println!("  layers:         {}", report.layer_count);
    println!("  parameters:     {}", report.total_parameters);
    println!(
        "  parameter size: {:.2} MB ({} bytes)",
        report.parameter_megabytes(),
        report.parameter_bytes
    );
    println!(
        "  input size:     {}x{}x1",
        report.input_height, report.input_width
    );
    println!(
        "  MAC:            {} ({:.2}M)",
        report.total_macs,
        report.total_macs as f64 / 1e6
    );
    Ok(0)
}
