//! Pixel-grid primitives: images, binary masks, kernels, resampling and
//! convolution.
//!
//! Intensities are kept as `f64` in `[0, 255]` throughout the pipeline;
//! quantization to 8 bits happens only at file I/O (see [`io`]). Resampling
//! uses pixel-center alignment: the source coordinate for destination index
//! `d` is `(d + 0.5) * scale - 0.5`, which makes identity-scale resizes
//! exact for every method.

pub mod io;

use crate::error::{Error, Result};

/// Single-channel intensity grid, row-major, values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Binary segmentation map paired with an [`Image`]; 1 = iris.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

/// Odd-sized convolution kernel. Blur/smoothing constructors normalize the
/// taps to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    height: usize,
    width: usize,
    taps: Vec<f64>,
}

/// Interpolation method for [`resize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMethod {
    Nearest,
    Bilinear,
    /// Catmull-Rom cubic (a = -0.5).
    Bicubic,
}

/// Border handling for [`convolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Out-of-bounds taps read 0. Used by the network layers.
    Zero,
    /// Out-of-bounds taps read the nearest edge pixel. Used by blur and
    /// smoothing filters so constant images stay constant.
    Clamp,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be >= 1"));
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "pixel buffer has {} values, expected {}",
                data.len(),
                height * width
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value.clamp(0.0, 255.0); height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    /// Edge-clamped read: indices outside the grid are clamped to the border.
    #[inline]
    pub fn at_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.at(r, c)
    }

    /// Clamp every intensity into `[0, 255]`.
    pub fn clamp_intensities(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
    }

    pub fn transposed(&self) -> Image {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                out[c * self.height + r] = self.at(r, c);
            }
        }
        Image {
            height: self.width,
            width: self.height,
            data: out,
        }
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("mask dimensions must be >= 1"));
        }
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "mask buffer has {} values, expected {}",
                data.len(),
                height * width
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask values must be 0 or 1"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.data[row * self.width + col] = value;
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn transposed(&self) -> Mask {
        let mut out = vec![0u8; self.data.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                out[c * self.height + r] = self.at(r, c);
            }
        }
        Mask {
            height: self.width,
            width: self.height,
            data: out,
        }
    }

    pub fn same_dims_as_image(&self, img: &Image) -> bool {
        self.height == img.height() && self.width == img.width()
    }
}

impl Kernel {
    pub fn new(height: usize, width: usize, taps: Vec<f64>) -> Result<Self> {
        if height % 2 == 0 || width % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel dimensions must be odd, got {height}x{width}"
            )));
        }
        if taps.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "kernel has {} taps, expected {}",
                taps.len(),
                height * width
            )));
        }
        Ok(Self { height, width, taps })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    #[inline]
    pub fn tap(&self, row: usize, col: usize) -> f64 {
        self.taps[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }
}

/// Isotropic Gaussian kernel sampled at integer offsets, normalized to sum 1.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel> {
    if size % 2 == 0 || size == 0 {
        return Err(Error::invalid("gaussian kernel size must be odd"));
    }
    if sigma <= 0.0 {
        return Err(Error::invalid("gaussian sigma must be positive"));
    }
    let r = (size / 2) as isize;
    let mut taps = Vec::with_capacity(size * size);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            taps.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    Kernel::new(size, size, taps)
}

/// Correlation-style convolution (no kernel flip), same-size output, values
/// clamped back into `[0, 255]`.
pub fn convolve(img: &Image, kernel: &Kernel, padding: Padding) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    let kr = (kernel.height() / 2) as isize;
    let kc = (kernel.width() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in -kr..=kr {
                for kx in -kc..=kc {
                    let t = kernel.tap((ky + kr) as usize, (kx + kc) as usize);
                    if t == 0.0 {
                        continue;
                    }
                    let sy = y as isize + ky;
                    let sx = x as isize + kx;
                    let v = match padding {
                        Padding::Zero => {
                            if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                0.0
                            } else {
                                img.at(sy as usize, sx as usize)
                            }
                        }
                        Padding::Clamp => img.at_clamped(sy, sx),
                    };
                    acc += t * v;
                }
            }
            out[y * w + x] = acc.clamp(0.0, 255.0);
        }
    }
    Image::new(h, w, out)
}

/// Catmull-Rom cubic weight (a = -0.5).
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Source coordinate for a destination index under pixel-center alignment.
#[inline]
fn src_coord(dst: usize, scale: f64) -> f64 {
    (dst as f64 + 0.5) * scale - 0.5
}

/// Resample an image to `out_h x out_w`.
pub fn resize(img: &Image, out_h: usize, out_w: usize, method: ResizeMethod) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize target must be >= 1 in both axes"));
    }
    let (in_h, in_w) = (img.height(), img.width());
    if out_h == in_h && out_w == in_w {
        return Ok(img.clone());
    }
    let scale_y = in_h as f64 / out_h as f64;
    let scale_x = in_w as f64 / out_w as f64;
    let mut out = vec![0.0; out_h * out_w];
    for dy in 0..out_h {
        let sy = src_coord(dy, scale_y);
        for dx in 0..out_w {
            let sx = src_coord(dx, scale_x);
            let v = match method {
                ResizeMethod::Nearest => {
                    let r = sy.round().clamp(0.0, in_h as f64 - 1.0) as usize;
                    let c = sx.round().clamp(0.0, in_w as f64 - 1.0) as usize;
                    img.at(r, c)
                }
                ResizeMethod::Bilinear => {
                    let y0 = sy.floor();
                    let x0 = sx.floor();
                    let fy = sy - y0;
                    let fx = sx - x0;
                    let y0 = y0 as isize;
                    let x0 = x0 as isize;
                    let p00 = img.at_clamped(y0, x0);
                    let p01 = img.at_clamped(y0, x0 + 1);
                    let p10 = img.at_clamped(y0 + 1, x0);
                    let p11 = img.at_clamped(y0 + 1, x0 + 1);
                    let top = p00 * (1.0 - fx) + p01 * fx;
                    let bot = p10 * (1.0 - fx) + p11 * fx;
                    top * (1.0 - fy) + bot * fy
                }
                ResizeMethod::Bicubic => {
                    let y0 = sy.floor() as isize;
                    let x0 = sx.floor() as isize;
                    let mut acc = 0.0;
                    for j in -1..=2 {
                        let wy = cubic_weight(sy - (y0 + j) as f64);
                        if wy == 0.0 {
                            continue;
                        }
                        for i in -1..=2 {
                            let wx = cubic_weight(sx - (x0 + i) as f64);
                            if wx == 0.0 {
                                continue;
                            }
                            acc += wy * wx * img.at_clamped(y0 + j, x0 + i);
                        }
                    }
                    acc
                }
            };
            out[dy * out_w + dx] = v.clamp(0.0, 255.0);
        }
    }
    Image::new(out_h, out_w, out)
}

/// Resample a mask: nearest-neighbor, then re-binarize at 0.5. Binary in,
/// binary out, regardless of scale.
pub fn resize_mask(mask: &Mask, out_h: usize, out_w: usize) -> Result<Mask> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize target must be >= 1 in both axes"));
    }
    let (in_h, in_w) = (mask.height(), mask.width());
    let scale_y = in_h as f64 / out_h as f64;
    let scale_x = in_w as f64 / out_w as f64;
    let mut out = vec![0u8; out_h * out_w];
    for dy in 0..out_h {
        let sy = src_coord(dy, scale_y)
            .round()
            .clamp(0.0, in_h as f64 - 1.0) as usize;
        for dx in 0..out_w {
            let sx = src_coord(dx, scale_x)
                .round()
                .clamp(0.0, in_w as f64 - 1.0) as usize;
            out[dy * out_w + dx] = if f64::from(mask.at(sy, sx)) > 0.5 { 1 } else { 0 };
        }
    }
    Mask::new(out_h, out_w, out)
}
