//! Thresholding of network outputs and the six segmentation metrics with
//! per-image mean/std aggregation.
//!
//! Metrics with a zero denominator are reported as undefined rather than
//! being coerced to 0; aggregation excludes them and counts the exclusions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcn::Tensor;
use crate::imaging::Mask;

/// Default binarization threshold for NIR-trained models.
pub const NIR_THRESHOLD: f64 = 0.55;
/// Default binarization threshold for visible-light models.
pub const VISIBLE_THRESHOLD: f64 = 0.4;

/// Pixel counts of a binary comparison; iris is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// The six per-image metric values; `None` marks an undefined denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricSet {
    pub const NAMES: [&'static str; 6] = [
        "accuracy",
        "sensitivity",
        "specificity",
        "precision",
        "npv",
        "f1",
    ];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => self.accuracy,
            "sensitivity" => self.sensitivity,
            "specificity" => self.specificity,
            "precision" => self.precision,
            "npv" => self.npv,
            "f1" => self.f1,
            _ => None,
        }
    }
}

/// Aggregate of one metric over a set of images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Mean over images where the metric is defined; `None` when it never is.
    pub mu: Option<f64>,
    /// Population standard deviation over the same images.
    pub sigma: Option<f64>,
    /// Number of images excluded for an undefined denominator.
    pub undefined_count: usize,
}

/// Full evaluation report; serializes to the JSON interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub image_count: usize,
    pub accuracy: MetricSummary,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    pub precision: MetricSummary,
    pub npv: MetricSummary,
    pub f1: MetricSummary,
}

/// Threshold a probability map with a strictly-greater comparison.
pub fn binarize(map: &Tensor, threshold: f64) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if map.channels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "probability map must have 1 channel, got {}",
            map.channels()
        )));
    }
    let data = map.data().iter().map(|&v| u8::from(v > threshold)).collect();
    Mask::new(map.height(), map.width(), data)
}

/// Per-pixel confusion counts of a prediction against the truth.
pub fn confusion(pred: &Mask, truth: &Mask) -> Result<ConfusionCounts> {
    if pred.height() != truth.height() || pred.width() != truth.width() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.height(),
            pred.width(),
            truth.height(),
            truth.width()
        )));
    }
    let mut counts = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (&p, &t) in pred.pixels().iter().zip(truth.pixels()) {
        match (p, t) {
            (1, 1) => counts.true_pos += 1,
            (1, 0) => counts.false_pos += 1,
            (0, 0) => counts.true_neg += 1,
            (0, 1) => counts.false_neg += 1,
            _ => unreachable!("masks are binary"),
        }
    }
    Ok(counts)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// Compute the six metrics from confusion counts.
pub fn metrics(c: &ConfusionCounts) -> MetricSet {
    let accuracy = ratio(c.true_pos + c.true_neg, c.total());
    let sensitivity = ratio(c.true_pos, c.true_pos + c.false_neg);
    let specificity = ratio(c.true_neg, c.true_neg + c.false_pos);
    let precision = ratio(c.true_pos, c.true_pos + c.false_pos);
    let npv = ratio(c.true_neg, c.true_neg + c.false_neg);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        (Some(p), Some(s)) => {
            // both zero: no true positives among predicted or actual iris
            debug_assert_eq!((p, s), (0.0, 0.0));
            None
        }
        _ => None,
    };
    MetricSet {
        accuracy,
        sensitivity,
        specificity,
        precision,
        npv,
        f1,
    }
}

fn summarize(values: impl Iterator<Item = Option<f64>>, total: usize) -> MetricSummary {
    let defined: Vec<f64> = values.flatten().collect();
    let undefined_count = total - defined.len();
    if defined.is_empty() {
        return MetricSummary {
            mu: None,
            sigma: None,
            undefined_count,
        };
    }
    let n = defined.len() as f64;
    let mu = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    MetricSummary {
        mu: Some(mu),
        sigma: Some(var.sqrt()),
        undefined_count,
    }
}

/// Aggregate per-image metrics into means and population standard
/// deviations, excluding (and counting) undefined values per metric.
pub fn aggregate(per_image: &[MetricSet]) -> Result<MetricsReport> {
    if per_image.is_empty() {
        return Err(Error::invalid("cannot aggregate zero images"));
    }
    let n = per_image.len();
    Ok(MetricsReport {
        image_count: n,
        accuracy: summarize(per_image.iter().map(|m| m.accuracy), n),
        sensitivity: summarize(per_image.iter().map(|m| m.sensitivity), n),
        specificity: summarize(per_image.iter().map(|m| m.specificity), n),
        precision: summarize(per_image.iter().map(|m| m.precision), n),
        npv: summarize(per_image.iter().map(|m| m.npv), n),
        f1: summarize(per_image.iter().map(|m| m.f1), n),
    })
}
