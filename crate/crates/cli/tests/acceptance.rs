//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers (run with `--nocapture` to see
//! them). Tolerances are pinned here, not configurable.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use ofx_core::eval::{aggregate, binarize, confusion, metrics, MetricSet};
use ofx_core::fcn::train::{train, TrainConfig, TrainSample};
use ofx_core::fcn::{
    backward, forward, mse_loss, sequential_network, Activation, LayerSpec, NetworkParameters,
    Tensor,
};
use ofx_core::imaging::{io, Image, Mask};
use ofx_core::offaxis::{
    apply_tilt, build_axis_map, warp_sample, AxisDirection, TiltDirection, TiltDraws, WarpDraws,
};
use ofx_core::pipeline::{
    build_dataset, composition_audit, draw_offaxis_plan, draw_quality_plan, execute_plan,
    subset_fractions, AugmentationPlan, BuildConfig, DatasetManifest, ManifestRecord,
    OutputFormat, SeedPolicy, Split, StageFlags, SubsetTag,
};

fn pass(number: u32, name: &str, detail: String) {
    println!("ACCEPTANCE {number} {name}: PASS ({detail})");
}

fn within(elapsed: Duration, budget_s: u64, what: &str) {
    assert!(
        elapsed < Duration::from_secs(budget_s),
        "{what} took {elapsed:?}, budget {budget_s}s"
    );
}

// ---------------------------------------------------------------------
// 1 + 2: closed-form complexity accounting through the CLI
// ---------------------------------------------------------------------

fn complexity_stdout() -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_ofx"))
        .arg("complexity")
        .output()
        .expect("run ofx complexity");
    assert!(out.status.success());
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn acceptance_1_complexity_exactness() {
    let start = Instant::now();
    let text = complexity_stdout();
    let elapsed = start.elapsed();

    assert!(text.contains("parameters:     74593"), "{text}");
    assert!(text.contains("MAC:            1426636800"), "{text}");
    assert!(text.contains("(1426.64M)"), "{text}");
    within(elapsed, 1, "complexity command");
    pass(
        1,
        "complexity-exactness",
        format!("74593 parameters, 1426636800 MAC in {elapsed:?}"),
    );
}

#[test]
fn acceptance_2_parameter_storage() {
    let bytes = 74_593u64 * 4;
    assert_eq!(bytes, 298_372);
    let mb = bytes as f64 / (1024.0 * 1024.0);
    assert_eq!(format!("{mb:.2}"), "0.28");

    let text = complexity_stdout();
    assert!(text.contains("0.28 MB (298372 bytes)"), "{text}");
    pass(2, "parameter-storage", format!("{bytes} bytes = {mb:.4} MB"));
}

// ---------------------------------------------------------------------
// 3: analytic gradients vs central finite differences
// ---------------------------------------------------------------------

fn flatten(params: &NetworkParameters) -> Vec<f64> {
    let mut flat = Vec::new();
    for layer in &params.layers {
        flat.extend_from_slice(&layer.weights);
        flat.extend_from_slice(&layer.biases);
    }
    flat
}

fn unflatten(params: &mut NetworkParameters, flat: &[f64]) {
    let mut i = 0;
    for layer in &mut params.layers {
        for w in &mut layer.weights {
            *w = flat[i];
            i += 1;
        }
        for b in &mut layer.biases {
            *b = flat[i];
            i += 1;
        }
    }
}

#[test]
fn acceptance_3_gradient_correctness() {
    let start = Instant::now();
    let specs = sequential_network(3, 8).unwrap();
    // seed pair chosen so no ReLU pre-activation sits within the +-1e-4
    // perturbation radius of its kink; central differences are only a
    // valid oracle away from the non-smooth points
    let params = NetworkParameters::glorot(specs, 6);
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let input = Tensor::from_data(
        1,
        6,
        6,
        (0..36).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let target = Tensor::from_data(
        1,
        6,
        6,
        (0..36).map(|_| f64::from(rng.random_range(0..2u8))).collect(),
    )
    .unwrap();

    let (out, cache) = forward(&params, &input).unwrap();
    let (_, lgrad) = mse_loss(&out, &target).unwrap();
    let grads = backward(&params, &cache, &lgrad).unwrap();
    let analytic: Vec<f64> = grads
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect();

    let flat = flatten(&params);
    let h = 1e-4;
    let mut work = params.clone();
    let mut worst = 0.0f64;
    for idx in 0..flat.len() {
        let mut plus = flat.clone();
        plus[idx] += h;
        unflatten(&mut work, &plus);
        let (op, _) = forward(&work, &input).unwrap();
        let (lp, _) = mse_loss(&op, &target).unwrap();

        let mut minus = flat.clone();
        minus[idx] -= h;
        unflatten(&mut work, &minus);
        let (om, _) = forward(&work, &input).unwrap();
        let (lm, _) = mse_loss(&om, &target).unwrap();

        let numeric = (lp - lm) / (2.0 * h);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
        assert!(
            rel < 1e-3,
            "parameter {idx}: analytic {a}, numeric {numeric}, rel {rel}"
        );
    }
    let elapsed = start.elapsed();
    within(elapsed, 60, "gradient check");
    pass(
        3,
        "gradient-correctness",
        format!("{} parameters, worst rel err {worst:.2e}, {elapsed:?}", flat.len()),
    );
}

// ---------------------------------------------------------------------
// 4: forward pass vs an independent naive convolution oracle
// ---------------------------------------------------------------------

fn naive_forward(params: &NetworkParameters, input: &Tensor) -> Tensor {
    let mut current = input.clone();
    for (spec, layer) in params.specs().iter().zip(&params.layers) {
        let (h, w) = (current.height(), current.width());
        let mut next = Tensor::zeros(spec.out_channels, h, w);
        for o in 0..spec.out_channels {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = layer.biases[o];
                    for i in 0..spec.in_channels {
                        for ky in -1..=1isize {
                            for kx in -1..=1isize {
                                let (sy, sx) = (y + ky, x + kx);
                                if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let wv = layer.weights[((o * spec.in_channels + i) * 3
                                    + (ky + 1) as usize)
                                    * 3
                                    + (kx + 1) as usize];
                                acc +=
                                    wv * current.data()[(i * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    next.data_mut()[(o * h + y as usize) * w + x as usize] = match spec.activation
                    {
                        Activation::Relu => acc.max(0.0),
                        Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                    };
                }
            }
        }
        current = next;
    }
    current
}

#[test]
fn acceptance_4_forward_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(4040);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let depth = rng.random_range(1..=3usize);
        let channels = rng.random_range(1..=4usize);
        let h = rng.random_range(3..=8usize);
        let w = rng.random_range(3..=8usize);
        let specs: Vec<LayerSpec> = (0..depth)
            .map(|l| LayerSpec {
                in_channels: if l == 0 { 1 } else { channels },
                out_channels: if l == depth - 1 { 1 } else { channels },
                activation: if l == depth - 1 {
                    Activation::Sigmoid
                } else {
                    Activation::Relu
                },
            })
            .collect();
        let params = NetworkParameters::glorot(specs, 1000 + case);
        let input = Tensor::from_data(
            1,
            h,
            w,
            (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let (out, _) = forward(&params, &input).unwrap();
        let want = naive_forward(&params, &input);
        for (a, b) in out.data().iter().zip(want.data()) {
            let diff = (a - b).abs();
            worst = worst.max(diff);
            assert!(diff < 1e-5, "case {case}: {a} vs {b}");
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, 60, "forward oracle sweep");
    pass(
        4,
        "forward-oracle-equivalence",
        format!("50 cases, worst abs diff {worst:.2e}, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------
// 5: overfit capacity on eight disk pairs
// ---------------------------------------------------------------------

fn disk_sample(size: usize, cx: f64, cy: f64, radius: f64) -> TrainSample {
    let mut img = vec![0.0f64; size * size];
    let mut mask = vec![0u8; size * size];
    for r in 0..size {
        for c in 0..size {
            let dx = c as f64 - cx;
            let dy = r as f64 - cy;
            let inside = dx * dx + dy * dy <= radius * radius;
            img[r * size + c] = if inside { 40.0 } else { 200.0 };
            mask[r * size + c] = u8::from(inside);
        }
    }
    TrainSample {
        image: Image::new(size, size, img).unwrap(),
        mask: Mask::new(size, size, mask).unwrap(),
    }
}

fn eight_disks(size: usize) -> Vec<TrainSample> {
    let s = size as f64;
    (0..8)
        .map(|i| {
            let fi = i as f64;
            disk_sample(
                size,
                s * (0.3 + 0.05 * fi),
                s * (0.65 - 0.04 * fi),
                s * (0.15 + 0.02 * fi),
            )
        })
        .collect()
}

#[test]
fn acceptance_5_overfit_capacity() {
    let start = Instant::now();
    // regression configuration fixed from the calibration run: a 5-layer,
    // 16-channel stack on 32x32 disks reaches the bound in ~370 steps
    let set = eight_disks(32);
    let specs = sequential_network(5, 16).unwrap();
    let params = NetworkParameters::glorot(specs, 1);
    let config = TrainConfig {
        max_epochs: 2000,
        stop_below_train_mse: Some(0.005),
        ..TrainConfig::training(123)
    };
    assert_eq!(config.lr, 1e-4);
    let outcome = train(params, &set, &[], &config).unwrap();
    let last = outcome.history.last().unwrap();
    assert!(
        last.train_mse < 0.005,
        "train MSE {} after {} steps",
        last.train_mse,
        last.step
    );
    assert!(last.step <= 2000, "took {} steps", last.step);

    let mut min_accuracy = 1.0f64;
    for sample in &set {
        let input = Tensor::from_image_normalized(&sample.image);
        let (prob, _) = forward(&outcome.params, &input).unwrap();
        let pred = binarize(&prob, 0.55).unwrap();
        let m = metrics(&confusion(&pred, &sample.mask).unwrap());
        let acc = m.accuracy.unwrap();
        min_accuracy = min_accuracy.min(acc);
        assert!(acc > 0.99, "per-image accuracy {acc}");
    }
    let elapsed = start.elapsed();
    within(elapsed, 600, "overfit run");
    pass(
        5,
        "overfit-capacity",
        format!(
            "MSE {:.5} at step {}, min accuracy {min_accuracy:.4}, {elapsed:?}",
            last.train_mse, last.step
        ),
    );
}

// ---------------------------------------------------------------------
// 6: workflow composition at 60,000 records
// ---------------------------------------------------------------------

fn render_source(idx: usize, h: usize, w: usize) -> (Image, Mask) {
    let cx = w as f64 * (0.25 + 0.5 * ((idx * 13) % 97) as f64 / 97.0);
    let cy = h as f64 * (0.25 + 0.5 * ((idx * 29) % 89) as f64 / 89.0);
    let radius = h.min(w) as f64 * (0.15 + 0.15 * ((idx * 7) % 11) as f64 / 11.0);
    let mut img = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let dx = c as f64 - cx;
            let dy = r as f64 - cy;
            let inside = dx * dx + dy * dy <= radius * radius;
            img.push(if inside {
                25.0 + (idx % 40) as f64
            } else {
                120.0 + ((r * 3 + c * 5 + idx) % 120) as f64
            });
            mask.push(u8::from(inside));
        }
    }
    (Image::new(h, w, img).unwrap(), Mask::new(h, w, mask).unwrap())
}

fn write_source_manifest(dir: &Path, count: usize, h: usize, w: usize) -> DatasetManifest {
    let records: Vec<ManifestRecord> = (0..count)
        .into_par_iter()
        .map(|i| {
            let (img, mask) = render_source(i, h, w);
            let source_id = format!("src{i:05}");
            let image_path = dir.join(format!("{source_id}.pgm"));
            let mask_path = dir.join(format!("{source_id}_m.pgm"));
            io::save_image(&image_path, &img).unwrap();
            io::save_mask(&mask_path, &mask).unwrap();
            ManifestRecord {
                sample_id: source_id.clone(),
                source_id: source_id.clone(),
                image_path,
                mask_path,
                subset: SubsetTag::Original,
                split: Split::Train,
                plan: AugmentationPlan::original(source_id),
            }
        })
        .collect();
    DatasetManifest { records }
}

#[test]
fn acceptance_6_workflow_composition() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let sources = write_source_manifest(&tmp.path().join("src"), 10_000, 24, 32);

    let mut config = BuildConfig::new(60_000, tmp.path().join("out"));
    config.target_size = [24, 32];
    config.image_format = OutputFormat::Pgm;
    let output = build_dataset(&sources, &config).unwrap();
    assert_eq!(output.manifest.len(), 60_000);

    let mut detail = String::new();
    for row in composition_audit(&output.manifest) {
        let delta = (row.actual_pct - row.expected_pct).abs();
        assert!(
            delta <= 1.5,
            "{}: actual {:.2}% vs stated {:.1}%",
            row.label,
            row.actual_pct,
            row.expected_pct
        );
        detail.push_str(&format!("{}={:.2}% ", row.label, row.actual_pct));
    }

    let fractions = subset_fractions(&output.manifest);
    let targets = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0];
    for (name, (actual, target)) in ["original", "off_axis", "unconstrained", "combined"]
        .iter()
        .zip(fractions.iter().zip(targets))
    {
        assert!(
            (actual - target).abs() * 100.0 <= 1.0,
            "{name}: {actual} vs {target}"
        );
    }
    let elapsed = start.elapsed();
    within(elapsed, 900, "composition build");
    pass(
        6,
        "workflow-composition",
        format!("60000 records, all rows within 1.5pp, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------
// 7: augmentation invariant suite over 10,000 seeded draws
// ---------------------------------------------------------------------

fn fnv_hash(bytes: impl Iterator<Item = u8>) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn output_hash(img: &Image, mask: &Mask) -> u64 {
    let img_bytes = img.pixels().iter().flat_map(|v| v.to_le_bytes());
    let mask_bytes = mask.pixels().iter().copied();
    fnv_hash(img_bytes.chain(mask_bytes))
}

#[test]
fn acceptance_7_augmentation_invariants() {
    let start = Instant::now();
    let policy = SeedPolicy::new(777);

    // strict monotonicity of the stretch schedule across both axis lengths
    for i in 0..10_000usize {
        let mut rng = policy.stream(&format!("axis{i}"), "draw");
        let s = if i % 2 == 0 { 120 } else { 160 };
        let lambda = rng.random_range(2.0..17.0);
        let dir = if rng.random_bool(0.5) {
            AxisDirection::TowardStart
        } else {
            AxisDirection::TowardEnd
        };
        let map = build_axis_map(s, lambda, dir).unwrap();
        assert_eq!(map.position(0), 1);
        for j in 1..s {
            assert!(map.position(j) > map.position(j - 1));
        }
        assert!(map.canvas_extent() >= s);
    }

    // full transforms at the working resolution: shape and binarity after
    // every stage combination, mask invariance under quality-only plans,
    // and bit-identical replay through the serialized plan
    let (src_img, src_mask) = render_source(4, 120, 160);
    (0..10_000usize).into_par_iter().for_each(|i| {
        let sample_id = format!("inv{i}");
        let offaxis = (i % 3 != 1).then(|| {
            let mut rng = policy.stream(&sample_id, "offaxis_plan");
            draw_offaxis_plan(&mut rng)
        });
        let quality = (i % 3 != 0).then(|| {
            let mut rng = policy.stream(&sample_id, "quality_plan");
            draw_quality_plan(&mut rng)
        });
        let plan = assemble_plan(sample_id, offaxis, quality);
        plan.validate().unwrap();

        let (img, mask) = execute_plan(&src_img, &src_mask, &plan).unwrap();
        assert_eq!((img.height(), img.width()), (120, 160));
        assert_eq!((mask.height(), mask.width()), (120, 160));
        assert!(mask.is_binary());
        assert!(img.pixels().iter().all(|v| (0.0..=255.0).contains(v)));
        if !plan.stage_flags.warped && !plan.stage_flags.tilted {
            assert_eq!(mask, src_mask, "quality-only plan moved the mask");
        }

        let json = serde_json::to_string(&plan).unwrap();
        let replayed: AugmentationPlan = serde_json::from_str(&json).unwrap();
        let (img2, mask2) = execute_plan(&src_img, &src_mask, &replayed).unwrap();
        assert_eq!(
            output_hash(&img, &mask),
            output_hash(&img2, &mask2),
            "replay diverged for draw {i}"
        );
    });

    // degenerate draws are identities
    let identity_warp = WarpDraws {
        col_lambda: 1.0,
        row_lambda: 1.0,
        col_direction: AxisDirection::TowardEnd,
        row_direction: AxisDirection::TowardStart,
    };
    let (wi, wm) = warp_sample(&src_img, &src_mask, &identity_warp).unwrap();
    assert_eq!(wi, src_img);
    assert_eq!(wm, src_mask);
    let identity_tilt = TiltDraws {
        direction: TiltDirection::UpRight,
        a: 0.0,
        b: 0.0,
        c: 1.0,
        d: 0.0,
    };
    let (ti, tm) = apply_tilt(&src_img, &src_mask, &identity_tilt).unwrap();
    assert_eq!(ti, src_img);
    assert_eq!(tm, src_mask);

    let elapsed = start.elapsed();
    within(elapsed, 600, "invariant suite");
    pass(
        7,
        "augmentation-invariants",
        format!("10000 axis draws + 10000 replayed transforms, {elapsed:?}"),
    );
}

/// Local mirror of the workflow's plan assembly for invariant draws.
fn assemble_plan(
    sample_id: String,
    offaxis: Option<ofx_core::pipeline::OffAxisDraw>,
    quality: Option<ofx_core::quality::QualityDraws>,
) -> AugmentationPlan {
    let (warped, tilted, warp_draws, tilt_draws) = match offaxis {
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
        warp_draws,
        tilt_draws,
        quality_draws: quality,
        subset_tag,
    }
}

// ---------------------------------------------------------------------
// 8: metrics vs a brute-force per-pixel oracle
// ---------------------------------------------------------------------

struct OracleMetrics {
    values: [Option<f64>; 6],
}

/// Recompute all six metrics from raw pixels with explicit denominators;
/// no shared code with the eval module.
fn oracle_metrics(pred: &[u8], truth: &[u8]) -> OracleMetrics {
    let (mut tp, mut fp, mut tn, mut fne) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            _ => fne += 1,
        }
    }
    let div = |n: u64, d: u64| if d == 0 { None } else { Some(n as f64 / d as f64) };
    let accuracy = div(tp + tn, tp + fp + tn + fne);
    let sensitivity = div(tp, tp + fne);
    let specificity = div(tn, tn + fp);
    let precision = div(tp, tp + fp);
    let npv = div(tn, tn + fne);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    };
    OracleMetrics {
        values: [accuracy, sensitivity, specificity, precision, npv, f1],
    }
}

fn compare_option(a: Option<f64>, b: Option<f64>, name: &str, case: usize) {
    match (a, b) {
        (None, None) => {}
        (Some(x), Some(y)) => {
            assert!((x - y).abs() < 1e-12, "case {case} {name}: {x} vs {y}")
        }
        _ => panic!("case {case} {name}: definedness mismatch ({a:?} vs {b:?})"),
    }
}

#[test]
fn acceptance_8_metrics_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(881);
    let mut per_image = Vec::new();
    for case in 0..1000usize {
        let (pred_bits, truth_bits): (Vec<u8>, Vec<u8>) = match case {
            // forced degenerate corners
            0 => (vec![0; 256], vec![0; 256]),
            1 => (vec![1; 256], vec![1; 256]),
            2 => (vec![0; 256], vec![1; 256]),
            3 => (vec![1; 256], vec![0; 256]),
            _ => {
                let density = rng.random_range(0.0..1.0);
                let p = (0..256)
                    .map(|_| u8::from(rng.random_bool(density)))
                    .collect();
                let t = (0..256)
                    .map(|_| u8::from(rng.random_bool(density)))
                    .collect();
                (p, t)
            }
        };
        let pred = Mask::new(16, 16, pred_bits.clone()).unwrap();
        let truth = Mask::new(16, 16, truth_bits.clone()).unwrap();
        let ours = metrics(&confusion(&pred, &truth).unwrap());
        let want = oracle_metrics(&pred_bits, &truth_bits);
        for (name, (a, b)) in MetricSet::NAMES.iter().zip(
            [
                ours.accuracy,
                ours.sensitivity,
                ours.specificity,
                ours.precision,
                ours.npv,
                ours.f1,
            ]
            .into_iter()
            .zip(want.values),
        ) {
            compare_option(a, b, name, case);
        }
        per_image.push(ours);
    }

    // aggregation excludes the undefined and counts them
    let report = aggregate(&per_image).unwrap();
    assert_eq!(
        report.sensitivity.undefined_count,
        per_image.iter().filter(|m| m.sensitivity.is_none()).count()
    );
    let elapsed = start.elapsed();
    within(elapsed, 60, "metrics oracle sweep");
    pass(
        8,
        "metrics-oracle-equivalence",
        format!("1000 mask pairs to 1e-12, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------
// 9: explicit statement of what desk scale does not reproduce
// ---------------------------------------------------------------------

#[test]
fn acceptance_9_desk_scale_statement() {
    println!(
        "NOTE: published segmentation scores on Bath800, CASIA-Thousand and \
         UBIRIS v2 (and the corresponding comparison tables/figures) require \
         licensed datasets and third-party segmentation tools; they are not \
         acceptance targets of this toolkit. The property and oracle suites \
         above stand in for them."
    );
    pass(9, "desk-scale-statement", "documented, no numeric target".into());
}
