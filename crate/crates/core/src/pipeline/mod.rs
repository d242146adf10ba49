//! The randomized augmentation workflow: plan drawing, plan execution,
//! dataset building with per-subset pass counts, composition auditing, and
//! group-atomic train/val/test splitting.
//!
//! A plan is drawn once per output sample from its own seeded stream and
//! serialized into the manifest, so two builds with equal seeds are
//! bit-identical no matter how many workers run.

pub mod manifest;
pub mod seed;

use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{io, resize, resize_mask, Image, Mask, ResizeMethod};
use crate::offaxis::{apply_tilt, warp_sample, AxisDirection, TiltDirection, TiltDraws, WarpDraws};
use crate::quality::{apply_contrast, apply_motion_blur, apply_shadow, QualityDraws, ShadowDraws};

pub use manifest::{DatasetManifest, ManifestRecord, Split};
pub use seed::SeedPolicy;

/// Which stages one sample went through.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlags {
    pub warped: bool,
    pub tilted: bool,
    pub contrasted: bool,
    pub blurred: bool,
    pub shadowed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetTag {
    Original,
    Unconstrained,
    OffAxis,
    OffAxisUnconstrained,
}

/// Fully materialized provenance of one sample: stage flags plus every
/// random draw needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub sample_id: String,
    pub stage_flags: StageFlags,
    pub warp_draws: Option<WarpDraws>,
    pub tilt_draws: Option<TiltDraws>,
    pub quality_draws: Option<QualityDraws>,
    pub subset_tag: SubsetTag,
}

impl AugmentationPlan {
    pub fn original(sample_id: impl Into<String>) -> Self {
        AugmentationPlan {
            sample_id: sample_id.into(),
            stage_flags: StageFlags::default(),
            warp_draws: None,
            tilt_draws: None,
            quality_draws: None,
            subset_tag: SubsetTag::Original,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.stage_flags;
        if f.warped != self.warp_draws.is_some() {
            return Err(Error::invalid("warped flag and warp draws disagree"));
        }
        if f.tilted != self.tilt_draws.is_some() {
            return Err(Error::invalid("tilted flag and tilt draws disagree"));
        }
        let quality_present = self.quality_draws.is_some();
        if (f.contrasted || f.blurred) != quality_present || f.contrasted != f.blurred {
            return Err(Error::invalid(
                "contrast/blur flags and quality draws disagree",
            ));
        }
        let shadow_present = self
            .quality_draws
            .as_ref()
            .is_some_and(|q| q.shadow.is_some());
        if f.shadowed != shadow_present {
            return Err(Error::invalid("shadowed flag and shadow draws disagree"));
        }
        if f.shadowed && !(f.contrasted && f.blurred) {
            return Err(Error::invalid("shadow requires the quality chain"));
        }

        let geometric = f.warped || f.tilted;
        let quality = f.contrasted || f.blurred || f.shadowed;
        let subset_ok = match self.subset_tag {
            SubsetTag::Original => !geometric && !quality,
            SubsetTag::OffAxis => geometric && !quality,
            SubsetTag::Unconstrained => f.contrasted && f.blurred && !geometric,
            SubsetTag::OffAxisUnconstrained => geometric && f.contrasted && f.blurred,
        };
        if !subset_ok {
            return Err(Error::invalid(format!(
                "stage flags do not match subset {:?}",
                self.subset_tag
            )));
        }

        if let Some(w) = &self.warp_draws {
            w.validate()?;
        }
        if let Some(t) = &self.tilt_draws {
            t.validate()?;
        }
        if let Some(q) = &self.quality_draws {
            q.validate()?;
        }
        Ok(())
    }
}

/// Stage flags plus draws for the off-axis branch of the workflow.
#[derive(Debug, Clone, PartialEq)]
pub struct OffAxisDraw {
    pub warped: bool,
    pub tilted: bool,
    pub warp: Option<WarpDraws>,
    pub tilt: Option<TiltDraws>,
}

fn draw_warp(rng: &mut impl Rng) -> WarpDraws {
    let col_lambda = rng.random_range(2.0..17.0);
    let col_direction = if rng.random_bool(0.5) {
        AxisDirection::TowardStart
    } else {
        AxisDirection::TowardEnd
    };
    let row_lambda = rng.random_range(2.0..17.0);
    let row_direction = if rng.random_bool(0.5) {
        AxisDirection::TowardStart
    } else {
        AxisDirection::TowardEnd
    };
    WarpDraws {
        col_lambda,
        row_lambda,
        col_direction,
        row_direction,
    }
}

fn draw_tilt(rng: &mut impl Rng) -> TiltDraws {
    if rng.random_bool(0.5) {
        TiltDraws {
            direction: TiltDirection::UpLeft,
            a: rng.random_range(0.15..0.45),
            b: rng.random_range(0.15..0.45),
            c: rng.random_range(0.9..1.0),
            d: rng.random_range(0.0..0.1),
        }
    } else {
        TiltDraws {
            direction: TiltDirection::UpRight,
            a: rng.random_range(0.0..0.1),
            b: rng.random_range(0.0..0.1),
            c: rng.random_range(0.55..1.0),
            d: rng.random_range(0.15..0.45),
        }
    }
}

/// Draw the off-axis branch: warp with probability 0.5; tilt always when
/// the warp was skipped, otherwise with probability 0.5. Every sample ends
/// up warped, tilted, or both (0.25 / 0.5 / 0.25).
pub fn draw_offaxis_plan(rng: &mut impl Rng) -> OffAxisDraw {
    let warped = rng.random_bool(0.5);
    let warp = warped.then(|| draw_warp(rng));
    let tilted = if warped { rng.random_bool(0.5) } else { true };
    let tilt = tilted.then(|| draw_tilt(rng));
    OffAxisDraw {
        warped,
        tilted,
        warp,
        tilt,
    }
}

/// Draw the quality branch: contrast and blur always, shadow with
/// probability 0.5 (its draws are materialized only when selected).
pub fn draw_quality_plan(rng: &mut impl Rng) -> QualityDraws {
    let contrast_offset_out = rng.random_range(-0.2..0.3);
    let contrast_offset_in = rng.random_range(0.0..0.2);
    let blur_length = rng.random_range(3.0..7.0);
    let blur_angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let shadow = rng.random_bool(0.5).then(|| ShadowDraws {
        sign: if rng.random_bool(0.5) { 1 } else { -1 },
        shift: rng.random_range(-0.3..0.3),
        lift: rng.random_range(0.0..0.1),
    });
    QualityDraws {
        contrast_offset_out,
        contrast_offset_in,
        blur_length,
        blur_angle,
        shadow,
    }
}

/// Assemble a plan from drawn branches.
fn plan_from_draws(
    sample_id: String,
    offaxis: Option<OffAxisDraw>,
    quality: Option<QualityDraws>,
) -> AugmentationPlan {
    let (warped, tilted, warp, tilt) = match offaxis {
        Some(d) => (d.warped, d.tilted, d.warp, d.tilt),
        None => (false, false, None, None),
    };
    let has_quality = quality.is_some();
    let shadowed = quality.as_ref().is_some_and(|q| q.shadow.is_some());
    let subset_tag = match (warped || tilted, has_quality) {
        (false, false) => SubsetTag::Original,
        (true, false) => SubsetTag::OffAxis,
        (false, true) => SubsetTag::Unconstrained,
        (true, true) => SubsetTag::OffAxisUnconstrained,
    };
    AugmentationPlan {
        sample_id,
        stage_flags: StageFlags {
            warped,
            tilted,
            contrasted: has_quality,
            blurred: has_quality,
            shadowed,
        },
        warp_draws: warp,
        tilt_draws: tilt,
        quality_draws: quality,
        subset_tag,
    }
}

/// Run a plan: geometric stages first (warp, then tilt), then
/// contrast -> blur -> shadow. Only the geometric stages touch the mask.
pub fn execute_plan(img: &Image, mask: &Mask, plan: &AugmentationPlan) -> Result<(Image, Mask)> {
    plan.validate()?;
    let mut image = img.clone();
    let mut mask = mask.clone();

    if let Some(warp) = &plan.warp_draws {
        let (i2, m2) = warp_sample(&image, &mask, warp)?;
        image = i2;
        mask = m2;
    }
    if let Some(tilt) = &plan.tilt_draws {
        let (i2, m2) = apply_tilt(&image, &mask, tilt)?;
        image = i2;
        mask = m2;
    }
    if let Some(quality) = &plan.quality_draws {
        if plan.stage_flags.contrasted {
            image = apply_contrast(&image, &mask, quality)?;
        }
        if plan.stage_flags.blurred {
            image = apply_motion_blur(&image, quality)?;
        }
        if let Some(shadow) = &quality.shadow {
            image = apply_shadow(&image, shadow)?;
        }
    }
    Ok((image, mask))
}

/// Per-subset pass counts over each source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Multipliers {
    pub off_axis: u32,
    pub unconstrained: u32,
    pub combined: u32,
}

impl Default for Multipliers {
    fn default() -> Self {
        Multipliers {
            off_axis: 2,
            unconstrained: 1,
            combined: 2,
        }
    }
}

/// On-disk format for generated samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Png,
    Pgm,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Png => "png",
            OutputFormat::Pgm => "pgm",
        }
    }
}

fn default_target_size() -> [usize; 2] {
    [120, 160]
}

fn default_split_ratios() -> [f64; 3] {
    [0.70, 0.20, 0.10]
}

/// Dataset build configuration; the JSON config file deserializes into
/// this, and CLI flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub seed: u64,
    #[serde(default)]
    pub multipliers: Multipliers,
    #[serde(default)]
    pub visible_light_mode: bool,
    pub output_dir: PathBuf,
    /// [height, width] of every produced sample.
    #[serde(default = "default_target_size")]
    pub target_size: [usize; 2],
    #[serde(default = "default_split_ratios")]
    pub split_ratios: [f64; 3],
    #[serde(default)]
    pub image_format: OutputFormat,
}

impl BuildConfig {
    pub fn new(seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        BuildConfig {
            seed,
            multipliers: Multipliers::default(),
            visible_light_mode: false,
            output_dir: output_dir.into(),
            target_size: default_target_size(),
            split_ratios: default_split_ratios(),
            image_format: OutputFormat::Png,
        }
    }
}

/// Result of a dataset build: the manifest plus the sources skipped for
/// missing masks.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub manifest: DatasetManifest,
    pub skipped_sources: Vec<String>,
}

struct PreparedSource {
    source_id: String,
    image: Image,
    mask: Mask,
}

fn load_source(record: &ManifestRecord, target: [usize; 2]) -> Result<PreparedSource> {
    let image = io::load_image(&record.image_path)?;
    let mask = io::load_mask(&record.mask_path)?;
    let [h, w] = target;
    let image = if image.height() == h && image.width() == w {
        image
    } else {
        resize(&image, h, w, ResizeMethod::Bilinear)?
    };
    let mask = if mask.height() == h && mask.width() == w {
        mask
    } else {
        resize_mask(&mask, h, w)?
    };
    Ok(PreparedSource {
        source_id: record.source_id.clone(),
        image,
        mask,
    })
}

fn sample_paths(config: &BuildConfig, sample_id: &str) -> (PathBuf, PathBuf) {
    let ext = config.image_format.extension();
    (
        config.output_dir.join("images").join(format!("{sample_id}.{ext}")),
        config.output_dir.join("masks").join(format!("{sample_id}.{ext}")),
    )
}

fn emit_sample(
    config: &BuildConfig,
    source_id: &str,
    plan: AugmentationPlan,
    image: &Image,
    mask: &Mask,
) -> Result<ManifestRecord> {
    let (image_path, mask_path) = sample_paths(config, &plan.sample_id);
    io::save_image(&image_path, image)?;
    io::save_mask(&mask_path, mask)?;
    Ok(ManifestRecord {
        sample_id: plan.sample_id.clone(),
        source_id: source_id.to_string(),
        image_path,
        mask_path,
        subset: plan.subset_tag,
        split: Split::Train, // reassigned by the split pass below
        plan,
    })
}

fn build_source_records(
    config: &BuildConfig,
    policy: &SeedPolicy,
    src: &PreparedSource,
) -> Result<Vec<ManifestRecord>> {
    let mut records = Vec::new();

    let original = AugmentationPlan::original(src.source_id.clone());
    records.push(emit_sample(config, &src.source_id, original, &src.image, &src.mask)?);

    for k in 0..config.multipliers.off_axis {
        let sample_id = format!("{}__offaxis{k}", src.source_id);
        let mut rng = policy.stream(&sample_id, "offaxis_plan");
        let plan = plan_from_draws(sample_id, Some(draw_offaxis_plan(&mut rng)), None);
        let (image, mask) = execute_plan(&src.image, &src.mask, &plan)?;
        records.push(emit_sample(config, &src.source_id, plan, &image, &mask)?);
    }

    if !config.visible_light_mode {
        for k in 0..config.multipliers.unconstrained {
            let sample_id = format!("{}__quality{k}", src.source_id);
            let mut rng = policy.stream(&sample_id, "quality_plan");
            let plan = plan_from_draws(sample_id, None, Some(draw_quality_plan(&mut rng)));
            let (image, mask) = execute_plan(&src.image, &src.mask, &plan)?;
            records.push(emit_sample(config, &src.source_id, plan, &image, &mask)?);
        }
        for k in 0..config.multipliers.combined {
            let sample_id = format!("{}__combined{k}", src.source_id);
            let mut geo_rng = policy.stream(&sample_id, "offaxis_plan");
            let mut quality_rng = policy.stream(&sample_id, "quality_plan");
            let plan = plan_from_draws(
                sample_id,
                Some(draw_offaxis_plan(&mut geo_rng)),
                Some(draw_quality_plan(&mut quality_rng)),
            );
            let (image, mask) = execute_plan(&src.image, &src.mask, &plan)?;
            records.push(emit_sample(config, &src.source_id, plan, &image, &mask)?);
        }
    }

    Ok(records)
}

/// Build an augmented dataset from the original records of `sources`.
///
/// Per source: the original is retained (renormalized to the target size),
/// plus `multipliers.off_axis` off-axis passes, `multipliers.unconstrained`
/// quality passes and `multipliers.combined` combined passes. Visible-light
/// mode keeps only originals and off-axis passes. Sources with an unreadable
/// mask are skipped with a warning; an unreadable image aborts the build.
pub fn build_dataset(sources: &DatasetManifest, config: &BuildConfig) -> Result<BuildOutput> {
    let originals: Vec<&ManifestRecord> = sources
        .records
        .iter()
        .filter(|r| r.subset == SubsetTag::Original)
        .collect();
    if originals.is_empty() {
        return Err(Error::invalid("source manifest has no original records"));
    }

    let mut prepared = Vec::new();
    let mut skipped = Vec::new();
    for record in originals {
        if !record.mask_path.exists() {
            log::warn!(
                "skipping {}: mask {} is missing",
                record.source_id,
                record.mask_path.display()
            );
            skipped.push(record.source_id.clone());
            continue;
        }
        prepared.push(load_source(record, config.target_size)?);
    }
    if prepared.is_empty() {
        return Err(Error::invalid("every source record was skipped"));
    }

    let policy = SeedPolicy::new(config.seed);
    let nested: Vec<Vec<ManifestRecord>> = prepared
        .par_iter()
        .map(|src| build_source_records(config, &policy, src))
        .collect::<Result<_>>()?;

    let mut manifest = DatasetManifest {
        records: nested.into_iter().flatten().collect(),
    };
    split_dataset(&mut manifest, config.split_ratios, &policy)?;
    Ok(BuildOutput {
        manifest,
        skipped_sources: skipped,
    })
}

/// Re-execute a record's plan against its original source sample.
pub fn replay_record(
    manifest: &DatasetManifest,
    record: &ManifestRecord,
) -> Result<(Image, Mask)> {
    let original = manifest.original_record(&record.source_id).ok_or_else(|| {
        Error::Manifest(format!("no original record for source {}", record.source_id))
    })?;
    let image = io::load_image(&original.image_path)?;
    let mask = io::load_mask(&original.mask_path)?;
    execute_plan(&image, &mask, &record.plan)
}

/// Assign train/val/test splits by seeded shuffle of source groups; every
/// sample derived from one source lands in the same split.
pub fn split_dataset(
    manifest: &mut DatasetManifest,
    ratios: [f64; 3],
    policy: &SeedPolicy,
) -> Result<()> {
    if manifest.is_empty() {
        return Err(Error::invalid("cannot split an empty manifest"));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split ratios must sum to 1"));
    }
    if ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::invalid("split ratios must be non-negative"));
    }

    let mut groups: Vec<String> = Vec::new();
    for r in &manifest.records {
        if !groups.contains(&r.source_id) {
            groups.push(r.source_id.clone());
        }
    }

    let mut rng = policy.stream("", "split");
    for i in (1..groups.len()).rev() {
        let j = rng.random_range(0..=i);
        groups.swap(i, j);
    }

    let n = groups.len() as f64;
    let c1 = ((ratios[0] * n).round() as usize).min(groups.len());
    let c2 = (((ratios[0] + ratios[1]) * n).round() as usize).clamp(c1, groups.len());

    let split_of = |source_id: &str| -> Split {
        let idx = groups.iter().position(|g| g == source_id).unwrap();
        if idx < c1 {
            Split::Train
        } else if idx < c2 {
            Split::Val
        } else {
            Split::Test
        }
    };
    for record in &mut manifest.records {
        record.split = split_of(&record.source_id);
    }
    Ok(())
}

/// One row of the composition audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub label: &'static str,
    /// Published composition target, as a percentage.
    pub expected_pct: f64,
    pub actual_pct: f64,
    pub count: usize,
}

/// Audit-table classifier: (warped, tilted, quality, shadowed) -> row.
const AUDIT_ROWS: [(&str, bool, bool, bool, bool, f64); 12] = [
    ("Contrast & Blur", false, false, true, false, 8.5),
    ("Contrast & Blur & Shadows", false, false, true, true, 8.5),
    ("Warp", true, false, false, false, 8.5),
    ("Tilt", false, true, false, false, 16.5),
    ("Warp & Tilt", true, true, false, false, 8.5),
    ("Warp & Contrast & Blur", true, false, true, false, 4.0),
    ("Tilt & Contrast & Blur", false, true, true, false, 8.5),
    ("Tilt & Contrast & Blur & Shadows", false, true, true, true, 8.5),
    ("Warp & Contrast & Blur & Shadows", true, false, true, true, 4.0),
    ("Warp & Tilt & Contrast & Blur", true, true, true, false, 4.0),
    ("Warp & Tilt & Contrast & Blur & Shadows", true, true, true, true, 4.0),
    ("No augmentation", false, false, false, false, 16.5),
];

/// Classify every record by its stage combination and report the observed
/// percentages next to the published targets.
pub fn composition_audit(manifest: &DatasetManifest) -> Vec<AuditRow> {
    let total = manifest.len().max(1) as f64;
    AUDIT_ROWS
        .iter()
        .map(|&(label, warped, tilted, quality, shadowed, expected_pct)| {
            let count = manifest
                .records
                .iter()
                .filter(|r| {
                    let f = &r.plan.stage_flags;
                    f.warped == warped
                        && f.tilted == tilted
                        && (f.contrasted && f.blurred) == quality
                        && f.shadowed == shadowed
                })
                .count();
            AuditRow {
                label,
                expected_pct,
                actual_pct: 100.0 * count as f64 / total,
                count,
            }
        })
        .collect()
}

/// Observed fraction of each subset: original, off-axis, unconstrained,
/// combined.
pub fn subset_fractions(manifest: &DatasetManifest) -> [f64; 4] {
    let total = manifest.len().max(1) as f64;
    let count = |tag: SubsetTag| {
        manifest.records.iter().filter(|r| r.subset == tag).count() as f64 / total
    };
    [
        count(SubsetTag::Original),
        count(SubsetTag::OffAxis),
        count(SubsetTag::Unconstrained),
        count(SubsetTag::OffAxisUnconstrained),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> SeedPolicy {
        SeedPolicy::new(7)
    }

    #[test]
    fn offaxis_branch_probabilities() {
        let mut rng = policy().stream("probe", "offaxis");
        let n = 10_000;
        let (mut tilt_only, mut warp_only, mut both) = (0, 0, 0);
        for _ in 0..n {
            let d = draw_offaxis_plan(&mut rng);
            assert!(d.warped || d.tilted);
            assert_eq!(d.warped, d.warp.is_some());
            assert_eq!(d.tilted, d.tilt.is_some());
            match (d.warped, d.tilted) {
                (false, true) => tilt_only += 1,
                (true, false) => warp_only += 1,
                (true, true) => both += 1,
                (false, false) => unreachable!(),
            }
        }
        let frac = |c: i32| f64::from(c) / f64::from(n);
        assert!((frac(tilt_only) - 0.5).abs() < 0.02, "{}", frac(tilt_only));
        assert!((frac(warp_only) - frac(both)).abs() < 0.02);
    }

    #[test]
    fn quality_branch_probabilities() {
        let mut rng = policy().stream("probe", "quality");
        let n = 10_000;
        let mut shadowed = 0;
        for _ in 0..n {
            let q = draw_quality_plan(&mut rng);
            q.validate().unwrap();
            if q.shadow.is_some() {
                shadowed += 1;
            }
        }
        let frac = f64::from(shadowed) / f64::from(n);
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn empty_plan_is_identity() {
        let img = Image::new(6, 8, (0..48).map(f64::from).collect()).unwrap();
        let mask = Mask::new(6, 8, (0..48).map(|v| (v % 5 == 0) as u8).collect()).unwrap();
        let plan = AugmentationPlan::original("x");
        let (i2, m2) = execute_plan(&img, &mask, &plan).unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn quality_only_plan_leaves_mask_untouched() {
        let img = Image::new(10, 12, (0..120).map(|v| f64::from(v) * 2.0).collect()).unwrap();
        let mask = Mask::new(10, 12, (0..120).map(|v| (v % 3 == 0) as u8).collect()).unwrap();
        let mut rng = policy().stream("q", "quality_plan");
        let plan = plan_from_draws("q".into(), None, Some(draw_quality_plan(&mut rng)));
        plan.validate().unwrap();
        let (_, m2) = execute_plan(&img, &mask, &plan).unwrap();
        assert_eq!(m2, mask);
    }

    #[test]
    fn plan_replay_is_bit_identical() {
        let img = Image::new(24, 32, (0..768).map(|v| f64::from(v % 251)).collect()).unwrap();
        let mask = Mask::new(24, 32, (0..768).map(|v| (v % 7 == 0) as u8).collect()).unwrap();
        let mut geo = policy().stream("r", "offaxis_plan");
        let mut qual = policy().stream("r", "quality_plan");
        let plan = plan_from_draws(
            "r".into(),
            Some(draw_offaxis_plan(&mut geo)),
            Some(draw_quality_plan(&mut qual)),
        );
        let (i1, m1) = execute_plan(&img, &mask, &plan).unwrap();
        // round-trip the plan through its JSON form, as the manifest does
        let json = serde_json::to_string(&plan).unwrap();
        let parsed: AugmentationPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, plan);
        let (i2, m2) = execute_plan(&img, &mask, &parsed).unwrap();
        assert_eq!(i1, i2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn plan_validation_catches_inconsistencies() {
        let mut plan = AugmentationPlan::original("bad");
        plan.stage_flags.warped = true;
        assert!(plan.validate().is_err());

        let mut rng = policy().stream("v", "q");
        let mut shadow_no_blur = plan_from_draws("v".into(), None, Some(draw_quality_plan(&mut rng)));
        shadow_no_blur.stage_flags.blurred = false;
        assert!(shadow_no_blur.validate().is_err());
    }

    fn synthetic_manifest(n: usize) -> DatasetManifest {
        let records = (0..n)
            .map(|i| {
                let source_id = format!("src{i:04}");
                ManifestRecord {
                    sample_id: source_id.clone(),
                    source_id: source_id.clone(),
                    image_path: PathBuf::from(format!("{source_id}.png")),
                    mask_path: PathBuf::from(format!("{source_id}_mask.png")),
                    subset: SubsetTag::Original,
                    split: Split::Train,
                    plan: AugmentationPlan::original(source_id),
                }
            })
            .collect();
        DatasetManifest { records }
    }

    #[test]
    fn split_ten_groups_is_7_2_1() {
        let mut manifest = synthetic_manifest(10);
        split_dataset(&mut manifest, [0.7, 0.2, 0.1], &policy()).unwrap();
        let count = |s: Split| manifest.split_records(s).count();
        assert_eq!(count(Split::Train), 7);
        assert_eq!(count(Split::Val), 2);
        assert_eq!(count(Split::Test), 1);
    }

    #[test]
    fn split_is_deterministic_and_group_atomic() {
        let mut a = synthetic_manifest(30);
        // give each source a second record, like an augmented variant
        let extras: Vec<ManifestRecord> = a
            .records
            .iter()
            .map(|r| {
                let mut e = r.clone();
                e.sample_id = format!("{}__v", r.sample_id);
                e
            })
            .collect();
        a.records.extend(extras);
        let mut b = a.clone();
        split_dataset(&mut a, [0.7, 0.2, 0.1], &policy()).unwrap();
        split_dataset(&mut b, [0.7, 0.2, 0.1], &policy()).unwrap();
        assert_eq!(a, b);
        for r in &a.records {
            let original_split = a
                .records
                .iter()
                .find(|o| o.source_id == r.source_id && o.sample_id != r.sample_id)
                .map(|o| o.split);
            assert_eq!(original_split, Some(r.split));
        }
    }

    #[test]
    fn split_rejects_bad_input() {
        let mut empty = DatasetManifest::default();
        assert!(split_dataset(&mut empty, [0.7, 0.2, 0.1], &policy()).is_err());
        let mut m = synthetic_manifest(4);
        assert!(split_dataset(&mut m, [0.7, 0.2, 0.2], &policy()).is_err());
    }

    #[test]
    fn audit_rows_cover_every_combination() {
        // labels are distinct and the expected percentages total 100
        let total: f64 = AUDIT_ROWS.iter().map(|r| r.5).sum();
        assert!((total - 100.0).abs() < 1e-9);
        let mut labels: Vec<&str> = AUDIT_ROWS.iter().map(|r| r.0).collect();
        labels.dedup();
        assert_eq!(labels.len(), 12);
    }
}
