use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward, conv_forward, conv_output_dim, fc_backward, fc_forward, maxpool_backward, maxpool_forward,
    mse_grad, mse_loss, relu, relu_backward,
};
use super::tensor::Tensor;
use super::NetError;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel_h: usize, kernel_w: usize, stride: usize },
    Relu,
    MaxPool { size: usize, stride: usize },
    FullyConnected { out_units: usize },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv { out_channels, kernel_h: kernel, kernel_w: kernel, stride: 1 }
    }

    pub fn pool2() -> Self {
        LayerSpec::MaxPool { size: 2, stride: 2 }
    }

    pub fn fc(out_units: usize) -> Self {
        LayerSpec::FullyConnected { out_units }
    }

    /// Output shape for input `(c, h, w)`, or `None` if the layer does not fit.
    pub fn output_shape(&self, (c, h, w): (usize, usize, usize)) -> Option<(usize, usize, usize)> {
        match *self {
            LayerSpec::Conv { out_channels, kernel_h, kernel_w, stride } => {
                if out_channels == 0 {
                    return None;
                }
                Some((out_channels, conv_output_dim(h, kernel_h, stride)?, conv_output_dim(w, kernel_w, stride)?))
            }
            LayerSpec::Relu => Some((c, h, w)),
            LayerSpec::MaxPool { size, stride } => {
                Some((c, conv_output_dim(h, size, stride)?, conv_output_dim(w, size, stride)?))
            }
            LayerSpec::FullyConnected { out_units } => (out_units > 0).then_some((out_units, 1, 1)),
        }
    }

    /// (weight count, bias count) for input `(c, h, w)`.
    pub fn param_counts(&self, (c, h, w): (usize, usize, usize)) -> (usize, usize) {
        match *self {
            LayerSpec::Conv { out_channels, kernel_h, kernel_w, .. } => (out_channels * c * kernel_h * kernel_w, out_channels),
            LayerSpec::FullyConnected { out_units } => (out_units * c * h * w, out_units),
            _ => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NetworkSpec {
    pub name: String,
    pub input_h: usize,
    pub input_w: usize,
    pub layers: Vec<LayerSpec>,
    /// Twice the number of landmarks the network predicts.
    pub output_dim: usize,
}

impl NetworkSpec {
    /// Activation shapes, input first, one more entry than there are layers.
    pub fn shapes(&self) -> Result<Vec<(usize, usize, usize)>, NetError> {
        if self.input_h == 0 || self.input_w == 0 || self.layers.is_empty() {
            return Err(NetError::InvalidSpec);
        }
        let mut shapes = vec![(1, self.input_h, self.input_w)];
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().unwrap()).ok_or(NetError::InvalidSpec)?;
            shapes.push(next);
        }
        let (c, h, w) = *shapes.last().unwrap();
        if c * h * w != self.output_dim {
            return Err(NetError::InvalidSpec);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        self.shapes().map(|_| ())
    }

    pub fn count(&self, pred: impl Fn(&LayerSpec) -> bool) -> usize {
        self.layers.iter().filter(|l| pred(l)).count()
    }

    pub fn num_params(&self) -> Result<usize, NetError> {
        let shapes = self.shapes()?;
        Ok(self.layers.iter().zip(&shapes).map(|(l, s)| { let (a, b) = l.param_counts(*s); a + b }).sum())
    }
}

/// Parameters of one layer; empty for ReLU and pooling.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-layer parameters aligned with `NetworkSpec::layers`. The same type
/// carries gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<LayerParams>,
}

impl NetworkWeights {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self, NetError> {
        let shapes = spec.shapes()?;
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| {
                let (nw, nb) = l.param_counts(*s);
                LayerParams { weights: vec![0.0; nw], bias: vec![0.0; nb] }
            })
            .collect();
        Ok(Self { layers })
    }

    /// He-uniform weights for layers feeding a ReLU, a narrower range for
    /// the output layer, zero biases except the output, which starts at 0.5
    /// (the patch center).
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self, NetError> {
        let shapes = spec.shapes()?;
        let mut w = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = spec.layers.iter().rposition(|l| matches!(l, LayerSpec::FullyConnected { .. } | LayerSpec::Conv { .. }));
        for (i, (layer, p)) in spec.layers.iter().zip(w.layers.iter_mut()).enumerate() {
            let (c, h, wd) = shapes[i];
            let fan_in = match *layer {
                LayerSpec::Conv { kernel_h, kernel_w, .. } => c * kernel_h * kernel_w,
                LayerSpec::FullyConnected { .. } => c * h * wd,
                _ => continue,
            };
            let is_last = Some(i) == last;
            let limit = if is_last { math::sqrt(1.0 / fan_in as f64) } else { math::sqrt(6.0 / fan_in as f64) };
            for v in p.weights.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
            if is_last {
                p.bias.fill(0.5);
            }
        }
        Ok(w)
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        match Self::zeros(spec) {
            Ok(z) => {
                z.layers.len() == self.layers.len()
                    && z.layers.iter().zip(&self.layers).all(|(a, b)| {
                        a.weights.len() == b.weights.len() && a.bias.len() == b.bias.len()
                    })
            }
            Err(_) => false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// self += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &NetworkWeights) {
        for (a, b) in self.params_mut().zip(other.params()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.params_mut() {
            *a *= alpha;
        }
    }
}

/// Everything the backward pass needs from the forward pass.
struct Trace {
    activations: Vec<Tensor>,
    argmax: Vec<Vec<usize>>,
}

fn forward_trace(spec: &NetworkSpec, weights: &NetworkWeights, patch: &Tensor) -> Result<Trace, NetError> {
    if patch.shape() != (1, spec.input_h, spec.input_w) {
        return Err(NetError::ShapeMismatch { expected: spec.input_h * spec.input_w, actual: patch.len() });
    }
    if weights.layers.len() != spec.layers.len() {
        return Err(NetError::WeightsMismatch);
    }
    let mut activations = Vec::with_capacity(spec.layers.len() + 1);
    let mut argmax = Vec::new();
    activations.push(patch.clone());
    for (layer, p) in spec.layers.iter().zip(&weights.layers) {
        let x = activations.last().unwrap();
        let y = match *layer {
            LayerSpec::Conv { kernel_h, kernel_w, stride, .. } => conv_forward(x, &p.weights, &p.bias, kernel_h, kernel_w, stride)?,
            LayerSpec::Relu => relu(x),
            LayerSpec::MaxPool { size, stride } => {
                let (y, idx) = maxpool_forward(x, size, stride)?;
                argmax.push(idx);
                y
            }
            LayerSpec::FullyConnected { .. } => fc_forward(x, &p.weights, &p.bias)?,
        };
        activations.push(y);
    }
    Ok(Trace { activations, argmax })
}

/// Sequential layer application. Outputs are patch-relative coordinates and
/// are not clamped.
pub fn net_forward(spec: &NetworkSpec, weights: &NetworkWeights, patch: &Tensor) -> Result<Vec<f64>, NetError> {
    let mut trace = forward_trace(spec, weights, patch)?;
    let out = trace.activations.pop().unwrap();
    if out.len() != spec.output_dim {
        return Err(NetError::ShapeMismatch { expected: spec.output_dim, actual: out.len() });
    }
    Ok(out.data)
}

/// MSE loss for one sample and its gradient with respect to every parameter.
pub fn backward(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    patch: &Tensor,
    target: &[f64],
) -> Result<(f64, NetworkWeights), NetError> {
    let mut grads = NetworkWeights::zeros(spec)?;
    let loss = accumulate_gradient(spec, weights, patch, target, &mut grads)?;
    Ok((loss, grads))
}

/// Like `backward`, adding into `grads` instead of allocating.
pub fn accumulate_gradient(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    patch: &Tensor,
    target: &[f64],
    grads: &mut NetworkWeights,
) -> Result<f64, NetError> {
    let trace = forward_trace(spec, weights, patch)?;
    let out = trace.activations.last().unwrap();
    let loss = mse_loss(&out.data, target)?;
    let mut g = Tensor::flat(mse_grad(&out.data, target)?);
    let mut pool_idx = trace.argmax.len();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &trace.activations[i];
        let p = &weights.layers[i];
        let gp = &mut grads.layers[i];
        g = match *layer {
            LayerSpec::Conv { kernel_h, kernel_w, stride, .. } => {
                let out_shape = trace.activations[i + 1].shape();
                let g_shaped = Tensor { channels: out_shape.0, height: out_shape.1, width: out_shape.2, data: g.data };
                let r = conv_backward(x, &p.weights, &g_shaped, kernel_h, kernel_w, stride)?;
                add_into(&mut gp.weights, &r.kernels);
                add_into(&mut gp.bias, &r.bias);
                r.input
            }
            LayerSpec::Relu => {
                let g_shaped = Tensor { channels: x.channels, height: x.height, width: x.width, data: g.data };
                relu_backward(x, &g_shaped)
            }
            LayerSpec::MaxPool { .. } => {
                pool_idx -= 1;
                maxpool_backward(x.shape(), &trace.argmax[pool_idx], &g)
            }
            LayerSpec::FullyConnected { .. } => {
                let r = fc_backward(x, &p.weights, &Tensor::flat(g.data))?;
                add_into(&mut gp.weights, &r.matrix);
                add_into(&mut gp.bias, &r.bias);
                r.input
            }
        };
    }
    Ok(loss)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
