//! Binary checkpoint format for network parameters and optimizer state.
//!
//! Little-endian layout:
//!
//! ```text
//! magic            7 bytes  "OFXFCN1"
//! layer_count      u32
//! per layer        u32 in_channels, u32 out_channels, u32 kh, u32 kw
//! per layer        weights f32 row-major (out*in*kh*kw), then biases f32
//! has_adam         u8
//! if has_adam:     u64 step, f64 lr, f64 beta1, f64 beta2, f64 epsilon,
//!                  then per layer m (weights, biases) as f32,
//!                  then per layer v (weights, biases) as f32
//! ```
//!
//! Activations are not stored: every layer is ReLU except the last, which
//! is sigmoid — the only family this toolkit trains.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, AdamState, LayerSpec, LayerTensors, NetworkParameters, KERNEL_SIZE};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"OFXFCN1";

fn write_f32s(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for &v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_f32s(r: &mut impl Read, count: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_moments(w: &mut impl Write, layers: &[LayerTensors]) -> std::io::Result<()> {
    for layer in layers {
        write_f32s(w, &layer.weights)?;
        write_f32s(w, &layer.biases)?;
    }
    Ok(())
}

fn read_moments(r: &mut impl Read, specs: &[LayerSpec]) -> std::io::Result<Vec<LayerTensors>> {
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let weights = read_f32s(
            r,
            spec.out_channels * spec.in_channels * KERNEL_SIZE * KERNEL_SIZE,
        )?;
        let biases = read_f32s(r, spec.out_channels)?;
        out.push(LayerTensors { weights, biases });
    }
    Ok(out)
}

pub fn save_checkpoint(
    path: &Path,
    params: &NetworkParameters,
    adam: Option<&AdamState>,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(params.specs().len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for spec in params.specs() {
        for v in [
            spec.in_channels as u32,
            spec.out_channels as u32,
            KERNEL_SIZE as u32,
            KERNEL_SIZE as u32,
        ] {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    for layer in &params.layers {
        write_f32s(&mut w, &layer.weights).map_err(io_err)?;
        write_f32s(&mut w, &layer.biases).map_err(io_err)?;
    }
    match adam {
        None => w.write_all(&[0u8]).map_err(io_err)?,
        Some(state) => {
            w.write_all(&[1u8]).map_err(io_err)?;
            w.write_all(&state.step.to_le_bytes()).map_err(io_err)?;
            for v in [state.lr, state.beta1, state.beta2, state.epsilon] {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
            write_moments(&mut w, &state.m).map_err(io_err)?;
            write_moments(&mut w, &state.v).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkParameters, Option<AdamState>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    let bad = |reason: &str| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    };

    let mut magic = [0u8; 7];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let layer_count = read_u32(&mut r).map_err(io_err)? as usize;
    if layer_count == 0 {
        return Err(bad("zero layers"));
    }

    let mut specs = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let ic = read_u32(&mut r).map_err(io_err)? as usize;
        let oc = read_u32(&mut r).map_err(io_err)? as usize;
        let kh = read_u32(&mut r).map_err(io_err)? as usize;
        let kw = read_u32(&mut r).map_err(io_err)? as usize;
        if kh != KERNEL_SIZE || kw != KERNEL_SIZE {
            return Err(bad("unsupported kernel size"));
        }
        specs.push(LayerSpec {
            in_channels: ic,
            out_channels: oc,
            activation: if l == layer_count - 1 {
                Activation::Sigmoid
            } else {
                Activation::Relu
            },
        });
    }

    let mut layers = Vec::with_capacity(layer_count);
    for spec in &specs {
        let weights = read_f32s(
            &mut r,
            spec.out_channels * spec.in_channels * KERNEL_SIZE * KERNEL_SIZE,
        )
        .map_err(io_err)?;
        let biases = read_f32s(&mut r, spec.out_channels).map_err(io_err)?;
        layers.push(LayerTensors { weights, biases });
    }
    let mut params = NetworkParameters::zeros(specs.clone());
    params.layers = layers;

    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(io_err)?;
    let adam = if flag[0] == 1 {
        let step = read_u64(&mut r).map_err(io_err)?;
        let lr = read_f64(&mut r).map_err(io_err)?;
        let beta1 = read_f64(&mut r).map_err(io_err)?;
        let beta2 = read_f64(&mut r).map_err(io_err)?;
        let epsilon = read_f64(&mut r).map_err(io_err)?;
        let m = read_moments(&mut r, &specs).map_err(io_err)?;
        let v = read_moments(&mut r, &specs).map_err(io_err)?;
        Some(AdamState {
            step,
            lr,
            beta1,
            beta2,
            epsilon,
            m,
            v,
        })
    } else if flag[0] == 0 {
        None
    } else {
        return Err(bad("bad optimizer flag"));
    };
    Ok((params, adam))
}
