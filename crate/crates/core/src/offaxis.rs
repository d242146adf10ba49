//! Off-axis geometry synthesis: monotone axis stretching with contracting
//! resize, and projective tilting of image/mask pairs.
//!
//! Both transforms run the image and its mask through the same geometric
//! path; only the resampling differs (bicubic/inverse-distance for
//! intensities, nearest for masks, which are re-binarized afterwards).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    convolve, gaussian_kernel, resize, resize_mask, Image, Mask, Padding, ResizeMethod,
};

/// Which end of an axis the stretch accumulates toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisDirection {
    /// Increments shrink from lambda to 1/lambda: spacing opens near the
    /// start of the axis.
    TowardStart,
    /// Increments grow from 1 to lambda: spacing opens near the end.
    TowardEnd,
}

/// Axis selector for [`stretch_axis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Columns,
    Rows,
}

/// Materialized draws for one spatial stretch: independent magnitude and
/// direction per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpDraws {
    pub col_lambda: f64,
    pub row_lambda: f64,
    pub col_direction: AxisDirection,
    pub row_direction: AxisDirection,
}

impl WarpDraws {
    pub fn validate(&self) -> Result<()> {
        for (name, l) in [("col_lambda", self.col_lambda), ("row_lambda", self.row_lambda)] {
            if !(2.0..=17.0).contains(&l) {
                return Err(Error::invalid(format!("{name} outside [2, 17]: {l}")));
            }
        }
        Ok(())
    }
}

/// Target positions for every source line along one axis: 1-based, starts
/// at 1, strictly increasing, last position >= the axis length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisMap {
    positions: Vec<usize>,
}

impl AxisMap {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// 1-based target position of source line `j` (0-based).
    pub fn position(&self, j: usize) -> usize {
        self.positions[j]
    }

    /// Extent of the stretched canvas along this axis.
    pub fn canvas_extent(&self) -> usize {
        *self.positions.last().unwrap()
    }

    pub fn is_identity(&self) -> bool {
        self.positions.iter().enumerate().all(|(i, &p)| p == i + 1)
    }
}

/// Build the target-position schedule for one axis.
///
/// A linear increment schedule (lambda down to 1/lambda toward the start,
/// or 1 up to lambda toward the end) is cumulative-summed from 1 and
/// rounded half-up; collisions are repaired by bumping to keep positions
/// strictly increasing.
pub fn build_axis_map(s: usize, lambda: f64, direction: AxisDirection) -> Result<AxisMap> {
    if s < 2 {
        return Err(Error::invalid(format!("axis length must be >= 2, got {s}")));
    }
    if !(lambda >= 1.0) {
        return Err(Error::invalid(format!("lambda must be >= 1, got {lambda}")));
    }
    let n = s as f64;
    let increment = |j: usize| {
        let t = (j - 1) as f64;
        match direction {
            AxisDirection::TowardStart => ((1.0 / lambda) - lambda) / (n - 1.0) * t + lambda,
            AxisDirection::TowardEnd => (lambda - 1.0) / (n - 1.0) * t + 1.0,
        }
    };
    let mut positions = Vec::with_capacity(s);
    positions.push(1usize);
    let mut acc = 1.0f64;
    for j in 2..=s {
        acc += increment(j);
        let mut y = (acc + 0.5).floor() as usize; // round half up
        let prev = *positions.last().unwrap();
        if y <= prev {
            y = prev + 1;
        }
        positions.push(y);
    }
    Ok(AxisMap { positions })
}

/// Place source lines on the stretched canvas and fill the gaps by
/// inverse-distance weighting of the two flanking lines. Operates on the
/// horizontal axis of a row-major buffer.
fn place_and_fill(img: &Image, map: &AxisMap) -> Image {
    let (h, s) = (img.height(), img.width());
    let canvas_w = map.canvas_extent();
    let mut data = vec![0.0; h * canvas_w];
    for r in 0..h {
        let row = img.row(r);
        let out = &mut data[r * canvas_w..(r + 1) * canvas_w];
        for j in 0..s {
            out[map.position(j) - 1] = row[j];
        }
        for j in 0..s - 1 {
            let left_pos = map.position(j);
            let right_pos = map.position(j + 1);
            let gap = (right_pos - left_pos) as f64;
            for i in left_pos + 1..right_pos {
                let to_right = (right_pos - i) as f64;
                let to_left = (i - left_pos) as f64;
                out[i - 1] = (row[j] * to_right + row[j + 1] * to_left) / gap;
            }
        }
    }
    Image::new(h, canvas_w, data).expect("canvas dims are valid")
}

/// Mask variant of [`place_and_fill`]: gaps take the nearer flanking line
/// (ties go left), keeping the canvas binary.
fn place_and_fill_mask(mask: &Mask, map: &AxisMap) -> Mask {
    let (h, s) = (mask.height(), mask.width());
    let canvas_w = map.canvas_extent();
    let mut data = vec![0u8; h * canvas_w];
    for r in 0..h {
        let out = &mut data[r * canvas_w..(r + 1) * canvas_w];
        for j in 0..s {
            out[map.position(j) - 1] = mask.at(r, j);
        }
        for j in 0..s - 1 {
            let left_pos = map.position(j);
            let right_pos = map.position(j + 1);
            let gap = (right_pos - left_pos) as f64;
            for i in left_pos + 1..right_pos {
                let w = (i - left_pos) as f64 / gap;
                out[i - 1] = if w <= 0.5 { mask.at(r, j) } else { mask.at(r, j + 1) };
            }
        }
    }
    Mask::new(h, canvas_w, data).expect("canvas dims are valid")
}

/// Stretch one axis of an image by `map`, then contract back to the
/// original extent with bicubic interpolation.
pub fn stretch_axis(img: &Image, map: &AxisMap, axis: Axis) -> Result<Image> {
    match axis {
        Axis::Columns => {
            if map.len() != img.width() {
                return Err(Error::ShapeMismatch(format!(
                    "axis map has {} lines, image has {} columns",
                    map.len(),
                    img.width()
                )));
            }
            if map.is_identity() {
                return Ok(img.clone());
            }
            let canvas = place_and_fill(img, map);
            resize(&canvas, img.height(), img.width(), ResizeMethod::Bicubic)
        }
        Axis::Rows => {
            if map.len() != img.height() {
                return Err(Error::ShapeMismatch(format!(
                    "axis map has {} lines, image has {} rows",
                    map.len(),
                    img.height()
                )));
            }
            let t = img.transposed();
            let out = stretch_axis(&t, map, Axis::Columns)?;
            Ok(out.transposed())
        }
    }
}

/// Mask counterpart of [`stretch_axis`]: nearest gap fill, nearest resize,
/// re-binarized.
pub fn stretch_axis_mask(mask: &Mask, map: &AxisMap, axis: Axis) -> Result<Mask> {
    match axis {
        Axis::Columns => {
            if map.len() != mask.width() {
                return Err(Error::ShapeMismatch(format!(
                    "axis map has {} lines, mask has {} columns",
                    map.len(),
                    mask.width()
                )));
            }
            if map.is_identity() {
                return Ok(mask.clone());
            }
            let canvas = place_and_fill_mask(mask, map);
            resize_mask(&canvas, mask.height(), mask.width())
        }
        Axis::Rows => {
            if map.len() != mask.height() {
                return Err(Error::ShapeMismatch(format!(
                    "axis map has {} lines, mask has {} rows",
                    map.len(),
                    mask.height()
                )));
            }
            let t = mask.transposed();
            let out = stretch_axis_mask(&t, map, Axis::Columns)?;
            Ok(out.transposed())
        }
    }
}

/// Stretch columns then rows of an image/mask pair, each axis with its own
/// drawn magnitude and direction. Output keeps the input resolution.
pub fn warp_sample(img: &Image, mask: &Mask, draws: &WarpDraws) -> Result<(Image, Mask)> {
    if !mask.same_dims_as_image(img) {
        return Err(Error::ShapeMismatch("image/mask dimensions differ".into()));
    }
    let col_map = build_axis_map(img.width(), draws.col_lambda, draws.col_direction)?;
    let img2 = stretch_axis(img, &col_map, Axis::Columns)?;
    let mask2 = stretch_axis_mask(mask, &col_map, Axis::Columns)?;

    let row_map = build_axis_map(img.height(), draws.row_lambda, draws.row_direction)?;
    let img3 = stretch_axis(&img2, &row_map, Axis::Rows)?;
    let mask3 = stretch_axis_mask(&mask2, &row_map, Axis::Rows)?;
    Ok((img3, mask3))
}

/// Which way the top of the frame leans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiltDirection {
    UpLeft,
    UpRight,
}

/// Materialized draws for one tilt: the normalized coordinates the two top
/// vertices move to. Bottom vertices stay pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltDraws {
    pub direction: TiltDirection,
    /// New top-left vertex (a, b).
    pub a: f64,
    pub b: f64,
    /// New top-right vertex (c, d).
    pub c: f64,
    pub d: f64,
}

impl TiltDraws {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.direction {
            TiltDirection::UpLeft => {
                (0.15..=0.45).contains(&self.a)
                    && (0.15..=0.45).contains(&self.b)
                    && (0.9..=1.0).contains(&self.c)
                    && (0.0..=0.1).contains(&self.d)
            }
            TiltDirection::UpRight => {
                (0.0..=0.1).contains(&self.a)
                    && (0.0..=0.1).contains(&self.b)
                    && (0.55..=1.0).contains(&self.c)
                    && (0.15..=0.45).contains(&self.d)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("tilt vertices outside the {:?} ranges", self.direction)))
        }
    }
}

/// Row-major 3x3 projective transform, normalized so the bottom-right
/// entry is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    m: [f64; 9],
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    pub fn matrix(&self) -> &[f64; 9] {
        &self.m
    }

    /// Apply to a point in normalized coordinates.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[6] * x + m[7] * y + m[8];
        ((m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    /// Inverse via the adjugate, renormalized to bottom-right 1.
    pub fn inverted(&self) -> Result<Homography> {
        let det = self.determinant();
        if det.abs() <= 1e-12 {
            return Err(Error::NumericDegeneracy("homography is singular".into()));
        }
        let m = &self.m;
        let adj = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        let scale = adj[8];
        if scale.abs() <= 1e-12 {
            return Err(Error::NumericDegeneracy(
                "inverse cannot be normalized to bottom-right 1".into(),
            ));
        }
        let mut out = [0.0; 9];
        for (o, a) in out.iter_mut().zip(adj) {
            *o = a / scale;
        }
        Ok(Homography { m: out })
    }
}

/// Gaussian elimination with partial pivoting on an n x (n+1) augmented
/// system.
fn solve_augmented(a: &mut [Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() <= 1e-12 {
            return Err(Error::NumericDegeneracy(
                "linear system for the homography is rank-deficient".into(),
            ));
        }
        a.swap(col, pivot_row);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..=n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = a[row][n];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// The unique homography taking the unit-square corners TL(0,0), TR(1,0),
/// BR(1,1), BL(0,1) to `targets`, in that order.
pub fn homography_from_unit_square(targets: [(f64, f64); 4]) -> Result<Homography> {
    let sources = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mut system: Vec<Vec<f64>> = Vec::with_capacity(8);
    for ((x, y), (u, v)) in sources.into_iter().zip(targets) {
        system.push(vec![x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u]);
        system.push(vec![0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v]);
    }
    let h = solve_augmented(&mut system)?;
    let m = [h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0];
    let hg = Homography { m };
    if hg.determinant().abs() <= 1e-12 {
        return Err(Error::NumericDegeneracy("target quad is degenerate".into()));
    }
    Ok(hg)
}

/// Homography for the drawn tilt: top vertices move to (a, b) and (c, d),
/// bottom vertices stay at (0, 1) and (1, 1).
pub fn tilt_homography(draws: &TiltDraws) -> Result<Homography> {
    homography_from_unit_square([
        (draws.a, draws.b),
        (draws.c, draws.d),
        (1.0, 1.0),
        (0.0, 1.0),
    ])
}

const INSIDE_EPS: f64 = 1e-9;

/// Tilt an image/mask pair by inverse-mapped nearest-neighbor sampling.
///
/// Destination pixels whose preimage falls outside the unit square are
/// void: image voids are filled by [`fill_voids`], mask voids become 0.
pub fn apply_tilt(img: &Image, mask: &Mask, draws: &TiltDraws) -> Result<(Image, Mask)> {
    if !mask.same_dims_as_image(img) {
        return Err(Error::ShapeMismatch("image/mask dimensions differ".into()));
    }
    let (h, w) = (img.height(), img.width());
    if h < 2 || w < 2 {
        return Err(Error::invalid("tilt needs at least a 2x2 image"));
    }
    let hom = tilt_homography(draws)?;
    let inv = hom.inverted()?;

    let mut out_img = vec![0.0; h * w];
    let mut out_mask = vec![0u8; h * w];
    let mut void = vec![false; h * w];
    for r in 0..h {
        let y = r as f64 / (h - 1) as f64;
        for c in 0..w {
            let x = c as f64 / (w - 1) as f64;
            let (sx, sy) = inv.apply(x, y);
            let idx = r * w + c;
            if (-INSIDE_EPS..=1.0 + INSIDE_EPS).contains(&sx)
                && (-INSIDE_EPS..=1.0 + INSIDE_EPS).contains(&sy)
            {
                let sc = (sx * (w - 1) as f64).round().clamp(0.0, (w - 1) as f64) as usize;
                let sr = (sy * (h - 1) as f64).round().clamp(0.0, (h - 1) as f64) as usize;
                out_img[idx] = img.at(sr, sc);
                out_mask[idx] = mask.at(sr, sc);
            } else {
                void[idx] = true;
            }
        }
    }

    let tilted = Image::new(h, w, out_img)?;
    let filled = if void.iter().any(|&v| v) {
        fill_voids(&tilted, &void)?
    } else {
        tilted
    };
    Ok((filled, Mask::new(h, w, out_mask)?))
}

/// Extend edge values into the void region: nearest valid pixel per column,
/// nearest valid per row, averaged where both passes assign. Repeats with
/// the newly filled pixels treated as valid until nothing is left (only
/// relevant when whole rows and columns are void).
fn extend_voids(img: &Image, void: &[bool]) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut values = img.pixels().to_vec();
    let mut known: Vec<bool> = void.iter().map(|&v| !v).collect();

    while known.iter().any(|&k| !k) {
        let col_pass = nearest_fill(&values, &known, h, w, false);
        let row_pass = nearest_fill(&values, &known, h, w, true);
        let mut progressed = false;
        for idx in 0..h * w {
            if known[idx] {
                continue;
            }
            let filled = match (col_pass[idx], row_pass[idx]) {
                (Some(a), Some(b)) => Some(0.5 * (a + b)),
                (Some(a), None) => Some(a),
                (None, Some(b)) => Some(b),
                (None, None) => None,
            };
            if let Some(v) = filled {
                values[idx] = v;
                known[idx] = true;
                progressed = true;
            }
        }
        if !progressed {
            break; // fully void input: caller rejects this earlier
        }
    }
    Image::new(h, w, values).expect("dims unchanged")
}

/// For every unknown pixel, the value of the nearest known pixel along one
/// axis (ties average the two sides). `None` where the whole line is
/// unknown.
fn nearest_fill(values: &[f64], known: &[bool], h: usize, w: usize, rows: bool) -> Vec<Option<f64>> {
    let mut out = vec![None; h * w];
    let (lines, len) = if rows { (h, w) } else { (w, h) };
    let index = |line: usize, pos: usize| {
        if rows {
            line * w + pos
        } else {
            pos * w + line
        }
    };
    let mut before: Vec<Option<(usize, f64)>> = vec![None; len];
    for line in 0..lines {
        before.iter_mut().for_each(|b| *b = None);
        let mut last: Option<(usize, f64)> = None;
        for pos in 0..len {
            let idx = index(line, pos);
            if known[idx] {
                last = Some((pos, values[idx]));
            }
            before[pos] = last;
        }
        let mut next: Option<(usize, f64)> = None;
        for pos in (0..len).rev() {
            let idx = index(line, pos);
            if known[idx] {
                next = Some((pos, values[idx]));
                continue;
            }
            out[idx] = match (before[pos], next) {
                (Some((bp, bv)), Some((np, nv))) => {
                    let db = pos - bp;
                    let dn = np - pos;
                    Some(if db < dn {
                        bv
                    } else if dn < db {
                        nv
                    } else {
                        0.5 * (bv + nv)
                    })
                }
                (Some((_, bv)), None) => Some(bv),
                (None, Some((_, nv))) => Some(nv),
                (None, None) => None,
            };
        }
    }
    out
}

/// Fill void pixels by edge extension and smooth the filled region with a
/// 3x3 Gaussian (sigma 2); valid pixels are untouched.
pub fn fill_voids(img: &Image, void: &[bool]) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    if void.len() != h * w {
        return Err(Error::ShapeMismatch(format!(
            "void grid has {} entries, image has {}",
            void.len(),
            h * w
        )));
    }
    if void.iter().all(|&v| v) {
        return Err(Error::invalid("cannot fill a fully void image"));
    }
    if !void.iter().any(|&v| v) {
        return Ok(img.clone());
    }
    let extended = extend_voids(img, void);
    let smoothed = convolve(&extended, &gaussian_kernel(3, 2.0)?, Padding::Clamp)?;
    let data = (0..h * w)
        .map(|i| if void[i] { smoothed.pixels()[i] } else { img.pixels()[i] })
        .collect();
    Image::new(h, w, data)
}
