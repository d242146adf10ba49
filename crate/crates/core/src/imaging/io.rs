//! Grayscale file I/O: 8-bit single-channel PNG and binary PGM (P5).
//!
//! Masks are stored as {0, 255} images; loading thresholds at 128 and
//! saving maps 1 back to 255.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Image, Mask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Pgm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => Ok(ImageFormat::Png),
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => Ok(ImageFormat::Pgm),
            _ => Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: "expected a .png or .pgm extension".into(),
            }),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Pgm => "pgm",
        }
    }
}

fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

fn load_gray_bytes(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    match ImageFormat::from_path(path)? {
        ImageFormat::Png => {
            let img = image::open(path).map_err(|e| Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            let gray = img.to_luma8();
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            Ok((h, w, gray.into_raw()))
        }
        ImageFormat::Pgm => read_pgm(path),
    }
}

fn save_gray_bytes(path: &Path, height: usize, width: usize, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
        }
    }
    match ImageFormat::from_path(path)? {
        ImageFormat::Png => {
            let buf = image::GrayImage::from_raw(width as u32, height as u32, bytes.to_vec())
                .ok_or_else(|| Error::ShapeMismatch("pixel buffer does not match size".into()))?;
            buf.save(path).map_err(|e| Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        }
        ImageFormat::Pgm => write_pgm(path, height, width, bytes),
    }
}

pub fn load_image(path: &Path) -> Result<Image> {
    let (h, w, bytes) = load_gray_bytes(path)?;
    Image::new(h, w, bytes.into_iter().map(f64::from).collect())
}

pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let bytes: Vec<u8> = img.pixels().iter().map(|&v| quantize(v)).collect();
    save_gray_bytes(path, img.height(), img.width(), &bytes)
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let (h, w, bytes) = load_gray_bytes(path)?;
    Mask::new(
        h,
        w,
        bytes.into_iter().map(|v| u8::from(v >= 128)).collect(),
    )
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let bytes: Vec<u8> = mask.pixels().iter().map(|&v| if v == 1 { 255 } else { 0 }).collect();
    save_gray_bytes(path, mask.height(), mask.width(), &bytes)
}

fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let bad = |reason: &str| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    };

    // header tokens separated by whitespace; '#' starts a comment to EOL
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        let mut byte = [0u8; 1];
        let mut token = Vec::new();
        loop {
            let n = reader.read(&mut byte).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                return Err(bad("truncated header"));
            }
            match byte[0] {
                b'#' => {
                    let mut skip = Vec::new();
                    reader
                        .read_until(b'\n', &mut skip)
                        .map_err(|e| Error::io(path, e))?;
                }
                b' ' | b'\t' | b'\r' | b'\n' => {
                    if !token.is_empty() {
                        break;
                    }
                }
                c => token.push(c),
            }
        }
        tokens.push(String::from_utf8(token).map_err(|_| bad("non-ascii header"))?);
    }

    if tokens[0] != "P5" {
        return Err(bad("magic is not P5"));
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: u32 = tokens[3].parse().map_err(|_| bad("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM supported (maxval 1..=255)"));
    }

    let mut data = vec![0u8; width * height];
    reader
        .read_exact(&mut data)
        .map_err(|e| Error::io(path, e))?;
    Ok((height, width, data))
}

fn write_pgm(path: &Path, height: usize, width: usize, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    write!(writer, "P5\n{width} {height}\n255\n").map_err(|e| Error::io(path, e))?;
    writer.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let img = Image::new(2, 3, vec![0.0, 10.4, 200.6, 255.0, 64.0, 128.0]).unwrap();
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.height(), 2);
        assert_eq!(back.width(), 3);
        // quantized round trip
        assert_eq!(back.pixels()[1], 10.0);
        assert_eq!(back.pixels()[2], 201.0);
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = Image::new(3, 2, vec![0.0, 255.0, 17.0, 99.9, 50.0, 1.2]).unwrap();
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.pixels()[3], 100.0);
    }

    #[test]
    fn mask_load_thresholds_at_128() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_pgm(&path, 1, 4, &[0, 127, 128, 255]).unwrap();
        let mask = load_mask(&path).unwrap();
        assert_eq!(mask.pixels(), &[0, 0, 1, 1]);
    }

    #[test]
    fn mask_save_maps_one_to_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = Mask::new(1, 2, vec![0, 1]).unwrap();
        save_mask(&path, &mask).unwrap();
        let (_, _, bytes) = load_gray_bytes(&path).unwrap();
        assert_eq!(bytes, vec![0, 255]);
    }

    #[test]
    fn unknown_extension_is_rejected() {
        assert!(load_image(Path::new("x.bmp")).is_err());
    }
}
