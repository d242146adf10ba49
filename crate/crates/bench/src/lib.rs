//! Deterministic synthetic inputs shared by the benchmarks.

use ofx_core::imaging::{Image, Mask};

/// A reproducible eye-like test card: dark disk on a graded background.
pub fn synthetic_pair(height: usize, width: usize) -> (Image, Mask) {
    let cx = width as f64 * 0.45;
    let cy = height as f64 * 0.55;
    let radius = height.min(width) as f64 * 0.3;
    let mut img = Vec::with_capacity(height * width);
    let mut mask = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let dx = c as f64 - cx;
            let dy = r as f64 - cy;
            let inside = dx * dx + dy * dy <= radius * radius;
            let background = 140.0 + 60.0 * (c as f64 / width as f64);
            img.push(if inside { 35.0 } else { background });
            mask.push(u8::from(inside));
        }
    }
    (
        Image::new(height, width, img).expect("valid dims"),
        Mask::new(height, width, mask).expect("valid dims"),
    )
}
