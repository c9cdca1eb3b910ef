//! A small reverse-mode network engine.
//!
//! Layers are evaluated one sample at a time. [`Network::forward`] records the
//! layer inputs on a tape, [`Network::backward`] consumes it and accumulates
//! parameter gradients, and [`Network::sgd_step`] applies and clears them.
//! Convolutions are stride 1 without padding; max pooling uses
//! non-overlapping windows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                layer: 0,
                detail: format!("shape {shape:?} holds {n} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// One-dimensional tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Declarative description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
    },
    MaxPool {
        pool_h: usize,
        pool_w: usize,
    },
    Flatten,
    Relu,
}

impl LayerSpec {
    /// Output shape for the given input shape, or a description of the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> core::result::Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(format!("dense layer expects [{inputs}], got {input:?}"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => match *input {
                [c, h, w] if c == in_channels && h >= kernel_h && w >= kernel_w && kernel_h > 0 && kernel_w > 0 => {
                    Ok(vec![out_channels, h - kernel_h + 1, w - kernel_w + 1])
                }
                _ => Err(format!(
                    "conv layer expects [{in_channels}, >={kernel_h}, >={kernel_w}], got {input:?}"
                )),
            },
            LayerSpec::MaxPool { pool_h, pool_w } => match *input {
                [c, h, w] if pool_h > 0 && pool_w > 0 && h >= pool_h && w >= pool_w => {
                    Ok(vec![c, h / pool_h, w / pool_w])
                }
                _ => Err(format!(
                    "max pool expects [c, >={pool_h}, >={pool_w}], got {input:?}"
                )),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Relu => Ok(input.to_vec()),
        }
    }

    fn param_counts(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs * outputs, outputs),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => (out_channels * in_channels * kernel_h * kernel_w, out_channels),
            _ => (0, 0),
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => (in_channels * kernel_h * kernel_w, out_channels * kernel_h * kernel_w),
            _ => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    spec: LayerSpec,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    weight: Vec<f64>,
    bias: Vec<f64>,
    weight_grad: Vec<f64>,
    bias_grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Cache {
    Input(Vec<f64>),
    Argmax(Vec<usize>),
    Nothing,
}

/// Serializable parameters of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    pub spec: LayerSpec,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

/// Architecture plus parameters; what checkpoints store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSnapshot {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerParams>,
}

/// A feed-forward network with a gradient tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    tape: Option<Vec<Cache>>,
}

impl Network {
    /// Builds the network with all parameters zero.
    pub fn zeros(input_shape: Vec<usize>, specs: &[LayerSpec]) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.clone();
        for (idx, spec) in specs.iter().enumerate() {
            let out = spec
                .output_shape(&shape)
                .map_err(|detail| Error::Shape { layer: idx, detail })?;
            let (nw, nb) = spec.param_counts();
            layers.push(Layer {
                spec: spec.clone(),
                in_shape: shape,
                out_shape: out.clone(),
                weight: vec![0.0; nw],
                bias: vec![0.0; nb],
                weight_grad: vec![0.0; nw],
                bias_grad: vec![0.0; nb],
            });
            shape = out;
        }
        Ok(Network {
            input_shape,
            layers,
            tape: None,
        })
    }

    /// Builds the network with Glorot-uniform weights, `U(-a, a)` with
    /// `a = sqrt(6 / (fan_in + fan_out))`, and zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        input_shape: Vec<usize>,
        specs: &[LayerSpec],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_shape, specs)?;
        for layer in &mut net.layers {
            let (fi, fo) = layer.spec.fans();
            if fi + fo == 0 {
                continue;
            }
            let a = libm::sqrt(6.0 / (fi + fo) as f64);
            let dist = Uniform::new_inclusive(-a, a)
                .map_err(|e| Error::Config(format!("initializer range: {e}")))?;
            for w in &mut layer.weight {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn from_snapshot(s: &NetworkSnapshot) -> Result<Self> {
        let specs: Vec<LayerSpec> = s.layers.iter().map(|l| l.spec.clone()).collect();
        let mut net = Self::zeros(s.input_shape.clone(), &specs)?;
        for (idx, lp) in s.layers.iter().enumerate() {
            net.set_layer_params(idx, lp.weight.data(), &lp.bias)?;
            if lp.weight.shape() != net.weight_shape(idx).as_slice() {
                return Err(Error::Shape {
                    layer: idx,
                    detail: format!(
                        "weight tensor shape {:?}, expected {:?}",
                        lp.weight.shape(),
                        net.weight_shape(idx)
                    ),
                });
            }
        }
        Ok(net)
    }

    pub fn snapshot(&self) -> NetworkSnapshot {
        NetworkSnapshot {
            input_shape: self.input_shape.clone(),
            layers: (0..self.layers.len())
                .map(|idx| LayerParams {
                    spec: self.layers[idx].spec.clone(),
                    weight: Tensor {
                        shape: self.weight_shape(idx),
                        data: self.layers[idx].weight.clone(),
                    },
                    bias: self.layers[idx].bias.clone(),
                })
                .collect(),
        }
    }

    fn weight_shape(&self, idx: usize) -> Vec<usize> {
        match self.layers[idx].spec {
            LayerSpec::Dense { inputs, outputs } => vec![outputs, inputs],
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => vec![out_channels, in_channels, kernel_h, kernel_w],
            _ => vec![0],
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.out_shape.as_slice())
            .unwrap_or(&self.input_shape)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    /// Whether the last layer is a ReLU, which makes every output nonnegative.
    pub fn ends_with_relu(&self) -> bool {
        matches!(self.layers.last().map(|l| &l.spec), Some(LayerSpec::Relu))
    }

    /// Overwrites the weight and bias of layer `idx`.
    pub fn set_layer_params(&mut self, idx: usize, weight: &[f64], bias: &[f64]) -> Result<()> {
        let layer = self.layers.get_mut(idx).ok_or_else(|| Error::Shape {
            layer: idx,
            detail: "no such layer".into(),
        })?;
        if weight.len() != layer.weight.len() || bias.len() != layer.bias.len() {
            return Err(Error::Shape {
                layer: idx,
                detail: format!(
                    "expected {} weights and {} biases, got {} and {}",
                    layer.weight.len(),
                    layer.bias.len(),
                    weight.len(),
                    bias.len()
                ),
            });
        }
        layer.weight.copy_from_slice(weight);
        layer.bias.copy_from_slice(bias);
        Ok(())
    }

    pub fn layer_params(&self, idx: usize) -> Option<(&[f64], &[f64])> {
        self.layers
            .get(idx)
            .map(|l| (l.weight.as_slice(), l.bias.as_slice()))
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(Error::Shape {
                layer: 0,
                detail: format!(
                    "expected {} parameters, got {}",
                    self.num_parameters(),
                    params.len()
                ),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weight.len();
            l.weight.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Accumulated gradients in the order of [`Network::parameters`].
    pub fn gradients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend_from_slice(&l.weight_grad);
            out.extend_from_slice(&l.bias_grad);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.weight_grad.iter_mut().for_each(|g| *g = 0.0);
            l.bias_grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// `p <- p - lr * grad(p)` for every parameter, then clears gradients.
    pub fn sgd_step(&mut self, lr: f64) {
        for l in &mut self.layers {
            for (w, g) in l.weight.iter_mut().zip(&mut l.weight_grad) {
                *w -= lr * *g;
                *g = 0.0;
            }
            for (b, g) in l.bias.iter_mut().zip(&mut l.bias_grad) {
                *b -= lr * *g;
                *g = 0.0;
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape != self.input_shape {
            return Err(Error::Shape {
                layer: 0,
                detail: format!(
                    "network input {:?}, got {:?}",
                    self.input_shape, x.shape
                ),
            });
        }
        Ok(())
    }

    /// Forward pass without recording a tape.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.data.clone();
        for l in &self.layers {
            cur = layer_forward(l, &cur, None);
        }
        Ok(Tensor {
            shape: self.output_shape().to_vec(),
            data: cur,
        })
    }

    /// Forward pass that records the tape consumed by [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut cur = x.data.clone();
        for l in &self.layers {
            let mut cache = Cache::Nothing;
            let next = layer_forward(l, &cur, Some(&mut cache));
            if matches!(cache, Cache::Nothing) && needs_input(&l.spec) {
                cache = Cache::Input(cur);
            }
            tape.push(cache);
            cur = next;
        }
        self.tape = Some(tape);
        Ok(Tensor {
            shape: self.output_shape().to_vec(),
            data: cur,
        })
    }

    /// Back-propagates `upstream` (d loss / d output) through the recorded
    /// pass, adds the parameter gradients to the accumulators and returns
    /// d loss / d input. ReLU uses 0 as its derivative at 0.
    pub fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let tape = self.tape.take().ok_or(Error::NoForward)?;
        if upstream.shape() != self.output_shape() {
            return Err(Error::Shape {
                layer: self.layers.len().saturating_sub(1),
                detail: format!(
                    "upstream gradient {:?}, output {:?}",
                    upstream.shape(),
                    self.output_shape()
                ),
            });
        }
        let mut grad = upstream.data.clone();
        for (l, cache) in self.layers.iter_mut().zip(tape).rev() {
            grad = layer_backward(l, &cache, &grad);
        }
        Ok(Tensor {
            shape: self.input_shape.clone(),
            data: grad,
        })
    }
}

fn needs_input(spec: &LayerSpec) -> bool {
    matches!(
        spec,
        LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } | LayerSpec::Relu
    )
}

fn layer_forward(l: &Layer, x: &[f64], cache: Option<&mut Cache>) -> Vec<f64> {
    match l.spec {
        LayerSpec::Dense { inputs, outputs } => (0..outputs)
            .map(|o| {
                let row = &l.weight[o * inputs..(o + 1) * inputs];
                l.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect(),
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
        } => {
            let (h, w) = (l.in_shape[1], l.in_shape[2]);
            let (oh, ow) = (l.out_shape[1], l.out_shape[2]);
            let mut y = vec![0.0; out_channels * oh * ow];
            for o in 0..out_channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = l.bias[o];
                        for c in 0..in_channels {
                            for u in 0..kernel_h {
                                let wrow = ((o * in_channels + c) * kernel_h + u) * kernel_w;
                                let xrow = (c * h + i + u) * w + j;
                                for v in 0..kernel_w {
                                    acc += l.weight[wrow + v] * x[xrow + v];
                                }
                            }
                        }
                        y[(o * oh + i) * ow + j] = acc;
                    }
                }
            }
            y
        }
        LayerSpec::MaxPool { pool_h, pool_w } => {
            let (c, h, w) = (l.in_shape[0], l.in_shape[1], l.in_shape[2]);
            let (oh, ow) = (h / pool_h, w / pool_w);
            let mut y = vec![0.0; c * oh * ow];
            let mut arg = vec![0usize; c * oh * ow];
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut at = 0;
                        for u in 0..pool_h {
                            for v in 0..pool_w {
                                let idx = (ch * h + i * pool_h + u) * w + j * pool_w + v;
                                if x[idx] > best {
                                    best = x[idx];
                                    at = idx;
                                }
                            }
                        }
                        let o = (ch * oh + i) * ow + j;
                        y[o] = best;
                        arg[o] = at;
                    }
                }
            }
            if let Some(cache) = cache {
                *cache = Cache::Argmax(arg);
            }
            y
        }
        LayerSpec::Flatten => x.to_vec(),
        LayerSpec::Relu => x.iter().map(|v| v.max(0.0)).collect(),
    }
}

fn layer_backward(l: &mut Layer, cache: &Cache, up: &[f64]) -> Vec<f64> {
    match l.spec {
        LayerSpec::Dense { inputs, outputs } => {
            let Cache::Input(x) = cache else {
                unreachable!("dense layer records its input")
            };
            let mut dx = vec![0.0; inputs];
            for o in 0..outputs {
                let g = up[o];
                l.bias_grad[o] += g;
                if g == 0.0 {
                    continue;
                }
                let row = o * inputs;
                for i in 0..inputs {
                    l.weight_grad[row + i] += g * x[i];
                    dx[i] += l.weight[row + i] * g;
                }
            }
            dx
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
        } => {
            let Cache::Input(x) = cache else {
                unreachable!("conv layer records its input")
            };
            let (h, w) = (l.in_shape[1], l.in_shape[2]);
            let (oh, ow) = (l.out_shape[1], l.out_shape[2]);
            let mut dx = vec![0.0; x.len()];
            for o in 0..out_channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let g = up[(o * oh + i) * ow + j];
                        if g == 0.0 {
                            continue;
                        }
                        l.bias_grad[o] += g;
                        for c in 0..in_channels {
                            for u in 0..kernel_h {
                                let wrow = ((o * in_channels + c) * kernel_h + u) * kernel_w;
                                let xrow = (c * h + i + u) * w + j;
                                for v in 0..kernel_w {
                                    l.weight_grad[wrow + v] += g * x[xrow + v];
                                    dx[xrow + v] += l.weight[wrow + v] * g;
                                }
                            }
                        }
                    }
                }
            }
            dx
        }
        LayerSpec::MaxPool { .. } => {
            let Cache::Argmax(arg) = cache else {
                unreachable!("max pool records its argmax")
            };
            let mut dx = vec![0.0; l.in_shape.iter().product()];
            for (g, &at) in up.iter().zip(arg) {
                dx[at] += g;
            }
            dx
        }
        LayerSpec::Flatten => up.to_vec(),
        LayerSpec::Relu => {
            let Cache::Input(x) = cache else {
                unreachable!("relu records its input")
            };
            up.iter()
                .zip(x)
                .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                .collect()
        }
    }
}

/// Step size `alpha0 * decay^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialDecay {
    pub alpha0: f64,
    pub decay: f64,
}

impl ExponentialDecay {
    pub fn rate(&self, n: usize) -> f64 {
        self.alpha0 * libm::pow(self.decay, n as f64)
    }
}
