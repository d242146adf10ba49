//! Capture-quality degradation: separate tone mapping inside/outside the
//! iris, linear motion blur, and directional column shadowing.
//!
//! None of these touch the mask — the iris position is unchanged, so the
//! ground truth stays valid. All randomness is materialized up front in
//! [`QualityDraws`] so a sample can be replayed bit-identically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{convolve, Image, Kernel, Mask, Padding};

/// Materialized draws for one sample's quality chain.
///
/// `shadow` is present only when the shadow stage was selected; the other
/// stages always run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityDraws {
    /// Tone offset for the region outside the iris, drawn from U(-0.2, 0.3).
    pub contrast_offset_out: f64,
    /// Tone offset for the iris region, drawn from U(0, 0.2).
    pub contrast_offset_in: f64,
    /// Blur extent in pixels, drawn from U(3, 7).
    pub blur_length: f64,
    /// Blur direction in radians, drawn from U(-pi, pi).
    pub blur_angle: f64,
    pub shadow: Option<ShadowDraws>,
}

/// Materialized draws for the shadow stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowDraws {
    /// Shadow direction: -1 or +1.
    pub sign: i8,
    /// Horizontal displacement of the shadow edge, drawn from U(-0.3, 0.3).
    pub shift: f64,
    /// Base brightness added after normalization, drawn from U(0, 0.1).
    pub lift: f64,
}

impl QualityDraws {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
        if !in_range(self.contrast_offset_out, -0.2, 0.3) {
            return Err(Error::invalid("contrast_offset_out outside [-0.2, 0.3]"));
        }
        if !in_range(self.contrast_offset_in, 0.0, 0.2) {
            return Err(Error::invalid("contrast_offset_in outside [0, 0.2]"));
        }
        if !in_range(self.blur_length, 3.0, 7.0) {
            return Err(Error::invalid("blur_length outside [3, 7]"));
        }
        if !in_range(self.blur_angle, -std::f64::consts::PI, std::f64::consts::PI) {
            return Err(Error::invalid("blur_angle outside [-pi, pi]"));
        }
        if let Some(s) = &self.shadow {
            if s.sign != -1 && s.sign != 1 {
                return Err(Error::invalid("shadow sign must be -1 or +1"));
            }
            if !in_range(s.shift, -0.3, 0.3) {
                return Err(Error::invalid("shadow shift outside [-0.3, 0.3]"));
            }
            if !in_range(s.lift, 0.0, 0.1) {
                return Err(Error::invalid("shadow lift outside [0, 0.1]"));
            }
        }
        Ok(())
    }
}

/// Region selector for [`tone_map`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrisRegion {
    InsideIris,
    OutsideIris,
}

/// A monotone intensity transfer curve for one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneCurve {
    pub region: IrisRegion,
    pub offset: f64,
}

/// Amplitude of the tanh term over a full-range input; the normalizer maps
/// [-TANH_SPAN, +TANH_SPAN] onto [0, 1].
fn tanh_span() -> f64 {
    (1.5f64).tanh()
}

/// Map one intensity through a region tone curve.
///
/// The curve squashes contrast with a tanh centered near mid-gray (0.5 of
/// full scale outside the iris, 0.45 inside), shifts it by the drawn offset
/// (brightening or darkening), renormalizes against the fixed tanh span,
/// clamps to [0, 1] and scales back to [0, 255].
pub fn tone_map(x: f64, curve: &ToneCurve) -> f64 {
    let xn = x.clamp(0.0, 255.0) / 255.0;
    let v = match curve.region {
        IrisRegion::OutsideIris => (3.0 * (xn - 0.5)).tanh() + curve.offset,
        IrisRegion::InsideIris => (3.0 * (xn - 0.45)).tanh() - curve.offset,
    };
    let span = tanh_span();
    let normed = ((v + span) / (2.0 * span)).clamp(0.0, 1.0);
    normed * 255.0
}

/// Apply the two region tone curves: iris pixels (mask = 1) go through the
/// inside curve, the rest through the outside curve.
pub fn apply_contrast(img: &Image, mask: &Mask, draws: &QualityDraws) -> Result<Image> {
    if !mask.same_dims_as_image(img) {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.height(),
            img.width(),
            mask.height(),
            mask.width()
        )));
    }
    let inside = ToneCurve {
        region: IrisRegion::InsideIris,
        offset: draws.contrast_offset_in,
    };
    let outside = ToneCurve {
        region: IrisRegion::OutsideIris,
        offset: draws.contrast_offset_out,
    };
    let data = img
        .pixels()
        .iter()
        .zip(mask.pixels())
        .map(|(&v, &m)| tone_map(v, if m == 1 { &inside } else { &outside }))
        .collect();
    Image::new(img.height(), img.width(), data)
}

/// Rasterize a centered line-segment PSF for linear camera motion.
///
/// The rounded length L is covered by stepping the line parameter in
/// half-pixel increments scaled so the dominant axis advances one cell per
/// unit, rounding to cells and merging duplicates; the surviving cells get
/// equal weights summing to 1. The kernel square has side 2*ceil(L/2)+1.
pub fn motion_blur_kernel(length: f64, angle: f64) -> Result<Kernel> {
    if !(length >= 1.0) {
        return Err(Error::invalid(format!(
            "blur length must be >= 1, got {length}"
        )));
    }
    let rounded = length.round();
    let radius = (rounded / 2.0).ceil() as isize;
    let side = (2 * radius + 1) as usize;

    let (dx, dy) = (angle.cos(), angle.sin());
    let dominant = dx.abs().max(dy.abs());
    // snap near-ties so the exact diagonals rasterize as diagonals instead
    // of being split by 1-ulp differences between sin and cos
    let snap = |v: f64| {
        if (v - 1.0).abs() < 1e-9 {
            1.0
        } else if (v + 1.0).abs() < 1e-9 {
            -1.0
        } else if v.abs() < 1e-9 {
            0.0
        } else {
            v
        }
    };
    let (ux, uy) = (snap(dx / dominant), snap(dy / dominant));

    let half = (rounded - 1.0) / 2.0;
    let steps = (4.0 * half).round() as usize; // 0.5-pixel increments
    let mut cells = std::collections::BTreeSet::new();
    for s in 0..=steps {
        let t = if steps == 0 {
            0.0
        } else {
            -half + s as f64 * (2.0 * half) / steps as f64
        };
        let cx = (t * ux).round() as isize;
        let cy = (t * uy).round() as isize;
        cells.insert((cy, cx));
    }

    let weight = 1.0 / cells.len() as f64;
    let mut taps = vec![0.0; side * side];
    for (cy, cx) in cells {
        let r = (cy + radius) as usize;
        let c = (cx + radius) as usize;
        taps[r * side + c] = weight;
    }
    Kernel::new(side, side, taps)
}

/// Blur with the drawn motion kernel; edge-clamp padding keeps constant
/// borders constant.
pub fn apply_motion_blur(img: &Image, draws: &QualityDraws) -> Result<Image> {
    let kernel = motion_blur_kernel(draws.blur_length, draws.blur_angle)?;
    convolve(img, &kernel, Padding::Clamp)
}

/// Per-column brightness coefficients for the shadow stage.
///
/// A tanh ramp over normalized column position is min-max normalized to
/// [0, 1], lifted by the drawn base brightness, and clamped to [0, 1.1].
/// The result is monotone in the drawn direction.
pub fn shadow_profile(width: usize, draws: &ShadowDraws) -> Result<Vec<f64>> {
    if width < 2 {
        return Err(Error::invalid("shadow profile needs width >= 2"));
    }
    let sign = f64::from(draws.sign);
    let raw: Vec<f64> = (0..width)
        .map(|c| {
            let x = c as f64 / (width - 1) as f64;
            (2.0 * sign * (x - 0.5 + draws.shift)).tanh()
        })
        .collect();
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(raw
        .into_iter()
        .map(|v| (((v - min) / (max - min)) + draws.lift).clamp(0.0, 1.1))
        .collect())
}

/// Multiply each column by its shadow coefficient. The mask is left alone;
/// shadowing moves no iris pixels.
pub fn apply_shadow(img: &Image, draws: &ShadowDraws) -> Result<Image> {
    let profile = shadow_profile(img.width(), draws)?;
    let w = img.width();
    let data = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v * profile[i % w]).clamp(0.0, 255.0))
        .collect();
    Image::new(img.height(), img.width(), data)
}
