//! The compact fully convolutional segmentation network.
//!
//! Ten 3x3 same-padding stride-1 layers, ReLU hidden activations, sigmoid
//! output; no pooling, so spatial dimensions are preserved end to end.
//! Everything here is plain CPU code in `f64`: the forward/backward passes,
//! MSE loss, bias-corrected Adam, and the closed-form parameter/MAC
//! accounting. Parameters are serialized as 32-bit floats (see
//! [`checkpoint`]).

pub mod checkpoint;
pub mod train;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Image, Mask};

/// Convolution kernel side; fixed for every layer.
pub const KERNEL_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// One convolutional layer: 3x3 kernel, same zero padding, stride 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

/// The published architecture: 1 -> 32, eight 32 -> 32, 32 -> 1, all 3x3;
/// ReLU throughout, sigmoid on the single-channel output.
pub fn canonical_network() -> Vec<LayerSpec> {
    let mut specs = vec![LayerSpec {
        in_channels: 1,
        out_channels: 32,
        activation: Activation::Relu,
    }];
    for _ in 0..8 {
        specs.push(LayerSpec {
            in_channels: 32,
            out_channels: 32,
            activation: Activation::Relu,
        });
    }
    specs.push(LayerSpec {
        in_channels: 32,
        out_channels: 1,
        activation: Activation::Sigmoid,
    });
    specs
}

/// A plain sequential stack in the same family as the canonical network:
/// `layers` total, `channels` wide, ReLU hidden, sigmoid output.
pub fn sequential_network(layers: usize, channels: usize) -> Result<Vec<LayerSpec>> {
    if layers < 2 {
        return Err(Error::invalid("need at least input and output layers"));
    }
    let mut specs = vec![LayerSpec {
        in_channels: 1,
        out_channels: channels,
        activation: Activation::Relu,
    }];
    for _ in 0..layers - 2 {
        specs.push(LayerSpec {
            in_channels: channels,
            out_channels: channels,
            activation: Activation::Relu,
        });
    }
    specs.push(LayerSpec {
        in_channels: channels,
        out_channels: 1,
        activation: Activation::Sigmoid,
    });
    Ok(specs)
}

/// Weights and biases learned per layer.
pub fn count_parameters(specs: &[LayerSpec]) -> u64 {
    specs
        .iter()
        .map(|s| {
            (KERNEL_SIZE * KERNEL_SIZE * s.in_channels * s.out_channels + s.out_channels) as u64
        })
        .sum()
}

/// Multiply-accumulates of the convolutions for one forward pass at the
/// given input size; bias additions excluded.
pub fn count_macs(specs: &[LayerSpec], height: usize, width: usize) -> u64 {
    let pixels = (height * width) as u64;
    specs
        .iter()
        .map(|s| (KERNEL_SIZE * KERNEL_SIZE * s.in_channels * s.out_channels) as u64 * pixels)
        .sum()
}

/// Closed-form complexity summary of an architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub layer_count: usize,
    pub total_parameters: u64,
    /// 4 bytes per parameter (32-bit storage).
    pub parameter_bytes: u64,
    pub input_height: usize,
    pub input_width: usize,
    pub total_macs: u64,
}

impl ComplexityReport {
    pub fn for_network(specs: &[LayerSpec], height: usize, width: usize) -> Self {
        let total_parameters = count_parameters(specs);
        ComplexityReport {
            layer_count: specs.len(),
            total_parameters,
            parameter_bytes: total_parameters * 4,
            input_height: height,
            input_width: width,
            total_macs: count_macs(specs, height, width),
        }
    }

    /// Size in binary megabytes, as usually quoted for model storage.
    pub fn parameter_megabytes(&self) -> f64 {
        self.parameter_bytes as f64 / (1024.0 * 1024.0)
    }
}

/// Dense C x H x W value grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "tensor data has {} values, expected {}",
                data.len(),
                channels * height * width
            )));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    /// Single-channel input in [0, 1] from an intensity image.
    pub fn from_image_normalized(img: &Image) -> Self {
        Tensor {
            channels: 1,
            height: img.height(),
            width: img.width(),
            data: img.pixels().iter().map(|&v| v / 255.0).collect(),
        }
    }

    /// Single-channel {0, 1} target from a mask.
    pub fn from_mask(mask: &Mask) -> Self {
        Tensor {
            channels: 1,
            height: mask.height(),
            width: mask.width(),
            data: mask.pixels().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }
}

/// Learned tensors of one layer; also reused for gradients and optimizer
/// moments, which are congruent by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensors {
    /// out x in x 3 x 3, row-major.
    pub weights: Vec<f64>,
    /// One per output channel.
    pub biases: Vec<f64>,
}

impl LayerTensors {
    fn zeros(spec: &LayerSpec) -> Self {
        LayerTensors {
            weights: vec![0.0; spec.out_channels * spec.in_channels * KERNEL_SIZE * KERNEL_SIZE],
            biases: vec![0.0; spec.out_channels],
        }
    }
}

/// All layer parameters plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    specs: Vec<LayerSpec>,
    pub layers: Vec<LayerTensors>,
}

/// Per-layer parameter gradients, congruent to [`NetworkParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerTensors>,
}

impl NetworkParameters {
    pub fn zeros(specs: Vec<LayerSpec>) -> Self {
        let layers = specs.iter().map(LayerTensors::zeros).collect();
        NetworkParameters { specs, layers }
    }

    /// Seeded uniform Glorot initialization; biases start at zero.
    pub fn glorot(specs: Vec<LayerSpec>, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = Self::zeros(specs);
        for (spec, layer) in params.specs.iter().zip(params.layers.iter_mut()) {
            let fan_in = (spec.in_channels * KERNEL_SIZE * KERNEL_SIZE) as f64;
            let fan_out = (spec.out_channels * KERNEL_SIZE * KERNEL_SIZE) as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        params
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.specs.iter().map(LayerTensors::zeros).collect(),
        }
    }

    fn congruent_with(&self, grads: &Gradients) -> bool {
        self.layers.len() == grads.layers.len()
            && self
                .layers
                .iter()
                .zip(&grads.layers)
                .all(|(p, g)| p.weights.len() == g.weights.len() && p.biases.len() == g.biases.len())
    }
}

/// Intermediates kept by [`forward`] for the matching [`backward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each layer (inputs[0] is the network input).
    inputs: Vec<Tensor>,
    /// Pre-activation of each layer.
    preacts: Vec<Tensor>,
    output_shape: (usize, usize, usize),
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn apply_activation(z: &Tensor, activation: Activation) -> Tensor {
    let data = match activation {
        Activation::Relu => z.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        Activation::Sigmoid => z.data.iter().map(|&v| sigmoid(v)).collect(),
    };
    Tensor {
        channels: z.channels,
        height: z.height,
        width: z.width,
        data,
    }
}

/// 3x3 same-padding correlation of `input` with one layer's weights,
/// biases pre-loaded into the output planes.
fn conv_layer(input: &Tensor, spec: &LayerSpec, layer: &LayerTensors) -> Tensor {
    let (h, w) = (input.height, input.width);
    let mut z = Tensor::zeros(spec.out_channels, h, w);
    for (o, &b) in layer.biases.iter().enumerate() {
        let plane = &mut z.data[o * h * w..(o + 1) * h * w];
        plane.fill(b);
    }
    let r = (KERNEL_SIZE / 2) as isize;
    for o in 0..spec.out_channels {
        for i in 0..spec.in_channels {
            let wbase = (o * spec.in_channels + i) * KERNEL_SIZE * KERNEL_SIZE;
            for dy in -r..=r {
                for dx in -r..=r {
                    let tap =
                        layer.weights[wbase + ((dy + r) * 3 + (dx + r)) as usize];
                    if tap == 0.0 {
                        continue;
                    }
                    let y_lo = (-dy).max(0) as usize;
                    let y_hi = h - dy.max(0) as usize;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = w - dx.max(0) as usize;
                    for y in y_lo..y_hi {
                        let src_row = ((i * h) as isize + y as isize + dy) as usize * w;
                        let dst_row = (o * h + y) * w;
                        let src = &input.data[src_row + (x_lo as isize + dx) as usize
                            ..src_row + (x_hi as isize + dx) as usize];
                        let dst = &mut z.data[dst_row + x_lo..dst_row + x_hi];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += tap * s;
                        }
                    }
                }
            }
        }
    }
    z
}

/// Run the network and keep the per-layer intermediates for [`backward`].
pub fn forward(params: &NetworkParameters, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let first = params
        .specs
        .first()
        .ok_or_else(|| Error::invalid("network has no layers"))?;
    if input.channels != first.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, network expects {}",
            input.channels, first.in_channels
        )));
    }
    if input.height < KERNEL_SIZE || input.width < KERNEL_SIZE {
        return Err(Error::invalid(format!(
            "input {}x{} is smaller than the {}x{} kernel",
            input.height, input.width, KERNEL_SIZE, KERNEL_SIZE
        )));
    }
    if input.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }

    let mut inputs = Vec::with_capacity(params.specs.len());
    let mut preacts = Vec::with_capacity(params.specs.len());
    let mut current = input.clone();
    for (spec, layer) in params.specs.iter().zip(&params.layers) {
        let z = conv_layer(&current, spec, layer);
        let out = apply_activation(&z, spec.activation);
        inputs.push(current);
        preacts.push(z);
        current = out;
    }
    let cache = ForwardCache {
        inputs,
        preacts,
        output_shape: (current.channels, current.height, current.width),
    };
    Ok((current, cache))
}

/// Mean squared error over all pixels, plus its gradient with respect to
/// the prediction.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if !pred.same_shape(target) {
        return Err(Error::ShapeMismatch(
            "prediction and target shapes differ".into(),
        ));
    }
    let n = pred.data.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.channels, pred.height, pred.width);
    for (g, (&p, &t)) in grad.data.iter_mut().zip(pred.data.iter().zip(&target.data)) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// Backpropagate a loss gradient through the cached forward pass.
///
/// ReLU passes gradient only where the pre-activation was strictly
/// positive; sigmoid uses s(1 - s).
pub fn backward(
    params: &NetworkParameters,
    cache: &ForwardCache,
    output_grad: &Tensor,
) -> Result<Gradients> {
    if cache.inputs.len() != params.specs.len() {
        return Err(Error::ContractViolation(
            "forward cache does not match the network depth".into(),
        ));
    }
    if (output_grad.channels, output_grad.height, output_grad.width) != cache.output_shape {
        return Err(Error::ContractViolation(
            "loss gradient does not match the cached output shape".into(),
        ));
    }
    for (spec, z) in params.specs.iter().zip(&cache.preacts) {
        if z.channels != spec.out_channels {
            return Err(Error::ContractViolation(
                "forward cache was built for a different architecture".into(),
            ));
        }
    }

    let mut grads = params.zero_gradients();
    let mut upstream = output_grad.clone();
    let r = (KERNEL_SIZE / 2) as isize;

    for l in (0..params.specs.len()).rev() {
        let spec = &params.specs[l];
        let layer = &params.layers[l];
        let input = &cache.inputs[l];
        let z = &cache.preacts[l];
        let (h, w) = (z.height, z.width);

        // dL/dz = upstream ⊙ act'(z)
        let mut dz = upstream;
        match spec.activation {
            Activation::Relu => {
                for (g, &zv) in dz.data.iter_mut().zip(&z.data) {
                    if zv <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &zv) in dz.data.iter_mut().zip(&z.data) {
                    let s = sigmoid(zv);
                    *g *= s * (1.0 - s);
                }
            }
        }

        let lg = &mut grads.layers[l];
        for o in 0..spec.out_channels {
            let plane = &dz.data[o * h * w..(o + 1) * h * w];
            lg.biases[o] = plane.iter().sum();
        }

        let mut dinput = Tensor::zeros(spec.in_channels, h, w);
        for o in 0..spec.out_channels {
            for i in 0..spec.in_channels {
                let wbase = (o * spec.in_channels + i) * KERNEL_SIZE * KERNEL_SIZE;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let widx = wbase + ((dy + r) * 3 + (dx + r)) as usize;
                        let tap = layer.weights[widx];
                        let y_lo = (-dy).max(0) as usize;
                        let y_hi = h - dy.max(0) as usize;
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = w - dx.max(0) as usize;
                        let mut wgrad = 0.0;
                        for y in y_lo..y_hi {
                            let in_row = ((i * h) as isize + y as isize + dy) as usize * w;
                            let dz_row = (o * h + y) * w;
                            let src = &input.data[in_row + (x_lo as isize + dx) as usize
                                ..in_row + (x_hi as isize + dx) as usize];
                            let dzr = &dz.data[dz_row + x_lo..dz_row + x_hi];
                            // dW accumulates input * dz over the valid window
                            for (s, g) in src.iter().zip(dzr) {
                                wgrad += s * g;
                            }
                            if tap != 0.0 {
                                // dInput scatters dz back through the tap
                                let di_row = ((i * h) as isize + y as isize + dy) as usize * w;
                                let dst = &mut dinput.data[di_row
                                    + (x_lo as isize + dx) as usize
                                    ..di_row + (x_hi as isize + dx) as usize];
                                for (d, g) in dst.iter_mut().zip(dzr) {
                                    *d += tap * g;
                                }
                            }
                        }
                        lg.weights[widx] = wgrad;
                    }
                }
            }
        }
        upstream = dinput;
    }
    Ok(grads)
}

/// Adam optimizer state; moments are congruent to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<LayerTensors>,
    pub v: Vec<LayerTensors>,
}

impl AdamState {
    pub fn new(params: &NetworkParameters, lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.specs.iter().map(LayerTensors::zeros).collect(),
            v: params.specs.iter().map(LayerTensors::zeros).collect(),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParameters,
    grads: &Gradients,
) -> Result<()> {
    if !params.congruent_with(grads) {
        return Err(Error::ShapeMismatch(
            "gradients are not congruent to the parameters".into(),
        ));
    }
    for (l, layer) in grads.layers.iter().enumerate() {
        let finite = layer.weights.iter().chain(&layer.biases).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!(
                "gradient of layer {l} (step {})",
                state.step + 1
            )));
        }
    }

    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - state.beta1.powi(t as i32);
    let bc2 = 1.0 - state.beta2.powi(t as i32);

    for l in 0..params.layers.len() {
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for idx in 0..p.len() {
                m[idx] = state.beta1 * m[idx] + (1.0 - state.beta1) * g[idx];
                v[idx] = state.beta2 * v[idx] + (1.0 - state.beta2) * g[idx] * g[idx];
                let mhat = m[idx] / bc1;
                let vhat = v[idx] / bc2;
                p[idx] -= state.lr * mhat / (vhat.sqrt() + state.epsilon);
            }
        };
        update(
            &mut params.layers[l].weights,
            &grads.layers[l].weights,
            &mut state.m[l].weights,
            &mut state.v[l].weights,
        );
        update(
            &mut params.layers[l].biases,
            &grads.layers[l].biases,
            &mut state.m[l].biases,
            &mut state.v[l].biases,
        );
    }
    Ok(())
}
