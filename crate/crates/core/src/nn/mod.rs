//! A small sequential network engine: valid 2-D convolutions and dense
//! layers with ReLU or linear activations, reverse-mode gradients, Huber
//! loss and RMSProp. Images are stored height × width × channels.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub mod checkpoint;
mod kernels;
pub mod loss;
pub mod optim;

pub use checkpoint::{load_weights, save_weights, CheckpointError};
pub use loss::{huber, HuberParams};
pub use optim::OptimizerState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error(
        "layer {layer}: convolution output ({input} - {kernel}) / {stride} + 1 is not an integer"
    )]
    NonIntegerConvOutput {
        layer: usize,
        input: usize,
        kernel: usize,
        stride: usize,
    },
    #[error("layer {0}: sizes must be at least 1")]
    ZeroSize(usize),
    #[error("backward called without a recorded forward pass")]
    NoRecordedForward,
    #[error("non-finite activation at layer {0}")]
    NonFinite(usize),
    #[error("invalid optimizer setting: {0}")]
    InvalidOptimizer(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let len: usize = shape.iter().product();
        if shape.contains(&0) || len != data.len() {
            return Err(NnError::ShapeMismatch {
                expected: shape,
                found: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        if self == Activation::Relu {
            relu_in_place(v);
        }
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        activation: Activation,
    },
    Dense {
        out_units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Conv2d { activation, .. } | LayerSpec::Dense { activation, .. } => {
                activation
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    spec: LayerSpec,
    in_shape: [usize; 3],
    out_shape: [usize; 3],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn fan_in(&self) -> usize {
        match self.spec {
            LayerSpec::Conv2d { kernel_size, .. } => kernel_size * kernel_size * self.in_shape[2],
            LayerSpec::Dense { .. } => self.in_shape.iter().product(),
        }
    }
}

fn out_shape(index: usize, spec: &LayerSpec, input: [usize; 3]) -> Result<[usize; 3], NnError> {
    match *spec {
        LayerSpec::Conv2d {
            out_channels,
            kernel_size,
            stride,
            ..
        } => {
            if out_channels == 0 || kernel_size == 0 || stride == 0 {
                return Err(NnError::ZeroSize(index));
            }
            let dim = |d: usize| {
                if d < kernel_size || !(d - kernel_size).is_multiple_of(stride) {
                    Err(NnError::NonIntegerConvOutput {
                        layer: index,
                        input: d,
                        kernel: kernel_size,
                        stride,
                    })
                } else {
                    Ok((d - kernel_size) / stride + 1)
                }
            };
            Ok([dim(input[0])?, dim(input[1])?, out_channels])
        }
        LayerSpec::Dense { out_units, .. } => {
            if out_units == 0 {
                return Err(NnError::ZeroSize(index));
            }
            Ok([1, 1, out_units])
        }
    }
}

/// What one layer needs for its backward pass.
#[derive(Debug, Clone)]
struct LayerTrace {
    /// im2col patches for convolutions, the flattened input for dense layers.
    saved_input: Vec<f64>,
    output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Network {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    trace: Option<Vec<LayerTrace>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

/// Hidden dense width of the grasp Q-network.
pub const GDQN_HIDDEN: usize = 256;
pub const GDQN_INPUT: [usize; 3] = [84, 84, 1];

/// Layer stack of the grasp Q-network for `n_actions` outputs.
pub fn gdqn_specs(n_actions: usize) -> [LayerSpec; 4] {
    [
        LayerSpec::Conv2d {
            out_channels: 16,
            kernel_size: 8,
            stride: 4,
            activation: Activation::Relu,
        },
        LayerSpec::Conv2d {
            out_channels: 32,
            kernel_size: 4,
            stride: 2,
            activation: Activation::Relu,
        },
        LayerSpec::Dense {
            out_units: GDQN_HIDDEN,
            activation: Activation::Relu,
        },
        LayerSpec::Dense {
            out_units: n_actions,
            activation: Activation::Linear,
        },
    ]
}

impl Network {
    /// Builds a network with uniform `±sqrt(6 / fan_in)` weights and zero biases.
    pub fn new<R: Rng + ?Sized>(
        input_shape: [usize; 3],
        specs: &[LayerSpec],
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeroed(input_shape, specs)?;
        for layer in &mut net.layers {
            let bound = libm::sqrt(6.0 / layer.fan_in() as f64);
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeroed(input_shape: [usize; 3], specs: &[LayerSpec]) -> Result<Self, NnError> {
        if input_shape.contains(&0) {
            return Err(NnError::ZeroSize(0));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape;
        for (i, spec) in specs.iter().enumerate() {
            let out = out_shape(i, spec, shape)?;
            let (nw, nb) = match *spec {
                LayerSpec::Conv2d {
                    out_channels,
                    kernel_size,
                    ..
                } => (
                    out_channels * kernel_size * kernel_size * shape[2],
                    out_channels,
                ),
                LayerSpec::Dense { out_units, .. } => {
                    (out_units * shape.iter().product::<usize>(), out_units)
                }
            };
            layers.push(Layer {
                spec: *spec,
                in_shape: shape,
                out_shape: out,
                weights: vec![0.0; nw],
                bias: vec![0.0; nb],
            });
            shape = out;
        }
        Ok(Self {
            input_shape,
            layers,
            trace: None,
        })
    }

    /// The grasp Q-network: two ReLU convolutions (16@8×8/4, 32@4×4/2),
    /// a 256-unit ReLU dense layer and a linear head with one Q-value per action.
    pub fn gdqn(n_actions: usize, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(GDQN_INPUT, &gdqn_specs(n_actions), &mut rng)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Output shape of every layer, height × width × channels.
    pub fn layer_shapes(&self) -> Vec<[usize; 3]> {
        self.layers.iter().map(|l| l.out_shape).collect()
    }

    pub fn output_len(&self) -> usize {
        self.layers
            .last()
            .map(|l| l.out_shape.iter().product())
            .unwrap_or_else(|| self.input_shape.iter().product())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameter slices in declaration order: weights then bias per layer.
    pub fn parameters(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    /// Weights of layer `layer` (conv: `[out][ky][kx][in]`, dense: `[out][in]`).
    pub fn layer_weights_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let l = &mut self.layers[layer];
        (&mut l.weights, &mut l.bias)
    }

    pub fn copy_parameters_from(&mut self, other: &Network) -> Result<(), NnError> {
        if self.specs() != other.specs() || self.input_shape != other.input_shape {
            return Err(NnError::ShapeMismatch {
                expected: self.layers.iter().map(|l| l.weights.len()).collect(),
                found: other.layers.iter().map(|l| l.weights.len()).collect(),
            });
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.bias.copy_from_slice(&src.bias);
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        let expected = self.input_shape.to_vec();
        let flat: usize = expected.iter().product();
        let ok = input.shape == expected
            || (input.shape.len() == 1
                && input.shape[0] == flat
                && self.input_shape[..2] == [1, 1]);
        if !ok {
            return Err(NnError::ShapeMismatch {
                expected,
                found: input.shape.clone(),
            });
        }
        Ok(())
    }

    fn run(
        &self,
        input: &Tensor,
        mut trace: Option<&mut Vec<LayerTrace>>,
    ) -> Result<Tensor, NnError> {
        self.check_input(input)?;
        let mut current = input.data.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut out, saved) = match layer.spec {
                LayerSpec::Conv2d {
                    kernel_size,
                    stride,
                    ..
                } => {
                    let cols = kernels::im2col(
                        &current,
                        layer.in_shape,
                        kernel_size,
                        stride,
                        layer.out_shape,
                    );
                    let out =
                        kernels::conv_forward(&cols, &layer.weights, &layer.bias, layer.out_shape);
                    (out, cols)
                }
                LayerSpec::Dense { .. } => {
                    let out = kernels::dense_forward(&current, &layer.weights, &layer.bias);
                    (out, current)
                }
            };
            layer.spec.activation().apply(&mut out);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(i));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(LayerTrace {
                    saved_input: saved,
                    output: out.clone(),
                });
            }
            current = out;
        }
        let shape = match self.layers.last() {
            Some(l) if matches!(l.spec, LayerSpec::Dense { .. }) => vec![l.out_shape[2]],
            Some(l) => l.out_shape.to_vec(),
            None => self.input_shape.to_vec(),
        };
        Ok(Tensor {
            shape,
            data: current,
        })
    }

    /// Inference; does not touch the recorded trace.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        self.run(input, None)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_recorded(&mut self, input: &Tensor) -> Result<Tensor, NnError> {
        let mut trace = Vec::with_capacity(self.layers.len());
        let out = self.run(input, Some(&mut trace))?;
        self.trace = Some(trace);
        Ok(out)
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given `dL/d(output)`.
    /// Consumes the recorded forward pass.
    pub fn backward(&mut self, output_grad: &[f64]) -> Result<Gradients, NnError> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_accumulate(output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Network::backward`] but adds into existing gradients.
    pub fn backward_accumulate(
        &mut self,
        output_grad: &[f64],
        grads: &mut Gradients,
    ) -> Result<(), NnError> {
        let trace = self.trace.take().ok_or(NnError::NoRecordedForward)?;
        if output_grad.len() != self.output_len() {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.output_len()],
                found: vec![output_grad.len()],
            });
        }
        if grads.slots.len() != self.layers.len() * 2 {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.layers.len() * 2],
                found: vec![grads.slots.len()],
            });
        }
        let mut upstream = output_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let t = &trace[i];
            if layer.spec.activation() == Activation::Relu {
                for (g, o) in upstream.iter_mut().zip(&t.output) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let need_input_grad = i > 0;
            let (gw, rest) = grads.slots[2 * i..].split_at_mut(1);
            let (gw, gb) = (&mut gw[0], &mut rest[0]);
            upstream = match layer.spec {
                LayerSpec::Conv2d {
                    kernel_size,
                    stride,
                    ..
                } => kernels::conv_backward(
                    &upstream,
                    &t.saved_input,
                    &layer.weights,
                    gw,
                    gb,
                    layer.in_shape,
                    layer.out_shape,
                    kernel_size,
                    stride,
                    need_input_grad,
                ),
                LayerSpec::Dense { .. } => kernels::dense_backward(
                    &upstream,
                    &t.saved_input,
                    &layer.weights,
                    gw,
                    gb,
                    need_input_grad,
                ),
            };
        }
        Ok(())
    }

    pub fn has_recorded_forward(&self) -> bool {
        self.trace.is_some()
    }
}

/// Parameter gradients, laid out like [`Network::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    slots: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            slots: net.parameters().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.slots.iter().map(|s| s.as_slice())
    }

    pub fn slot(&self, i: usize) -> &[f64] {
        &self.slots[i]
    }

    pub fn scale(&mut self, factor: f64) {
        for s in &mut self.slots {
            for v in s {
                *v *= factor;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for s in &mut self.slots {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slots.iter().all(|s| s.iter().all(|v| *v == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gdqn_shapes_and_parameter_count() {
        let net = Network::gdqn(3, 0).unwrap();
        assert_eq!(
            net.layer_shapes(),
            vec![[20, 20, 16], [9, 9, 32], [1, 1, 256], [1, 1, 3]]
        );
        assert_eq!(net.parameter_count(), 673_843);
        let per_layer: Vec<usize> = net
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .collect();
        assert_eq!(per_layer, vec![1_040, 8_224, 663_808, 771]);
        let out = net.forward(&Tensor::zeros(vec![84, 84, 1])).unwrap();
        assert_eq!(out.shape(), &[3]);
    }

    #[test]
    fn gdqn_width_follows_action_count() {
        assert_eq!(Network::gdqn(12, 0).unwrap().output_len(), 12);
        assert_eq!(Network::gdqn(24, 0).unwrap().output_len(), 24);
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = Network::gdqn(3, 0).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros(vec![80, 84, 1])),
            Err(NnError::ShapeMismatch { .. })
        ));
        let specs = [LayerSpec::Conv2d {
            out_channels: 2,
            kernel_size: 3,
            stride: 2,
            activation: Activation::Relu,
        }];
        assert_eq!(
            Network::zeroed([6, 6, 1], &specs).unwrap_err(),
            NnError::NonIntegerConvOutput {
                layer: 0,
                input: 6,
                kernel: 3,
                stride: 2
            }
        );
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let spec = [LayerSpec::Dense {
            out_units: 4,
            activation: Activation::Linear,
        }];
        let mut net = Network::zeroed([1, 1, 4], &spec).unwrap();
        let (w, _) = net.layer_weights_mut(0);
        for i in 0..4 {
            w[i * 4 + i] = 1.0;
        }
        let x = Tensor::from_vec(vec![0.5, -2.0, 3.25, 0.0]);
        assert_eq!(net.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn relu_examples() {
        let mut v = [-1.0, 0.0, 2.0];
        relu_in_place(&mut v);
        assert_eq!(v, [0.0, 0.0, 2.0]);
        let again = v;
        relu_in_place(&mut v);
        assert_eq!(v, again);
    }

    #[test]
    fn backward_requires_forward() {
        let mut net = Network::gdqn(3, 0).unwrap();
        assert_eq!(
            net.backward(&[1.0, 0.0, 0.0]).unwrap_err(),
            NnError::NoRecordedForward
        );
        net.forward_recorded(&Tensor::zeros(vec![84, 84, 1]))
            .unwrap();
        assert!(net.backward(&[1.0, 0.0, 0.0]).is_ok());
        // The trace is consumed.
        assert_eq!(
            net.backward(&[1.0, 0.0, 0.0]).unwrap_err(),
            NnError::NoRecordedForward
        );
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut net = Network::gdqn(3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::new(
            vec![84, 84, 1],
            (0..84 * 84).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        net.forward_recorded(&x).unwrap();
        assert!(net.backward(&[0.0; 3]).unwrap().is_zero());
    }

    #[test]
    fn forward_is_deterministic() {
        let net = Network::gdqn(3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::new(
            vec![84, 84, 1],
            (0..84 * 84).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_eq!(Network::gdqn(3, 4).unwrap(), net);
    }
}
