//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Inputs are batched row-major: one example per row. Gradients returned by
//! [`DenseNet::backward`] are those of `sum(output_gradient * output)` over the
//! whole batch, with respect to every parameter and every input entry.

mod adam;
pub mod checkpoint;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use adam::{AdamConfig, AdamState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("input has {got} columns, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("output gradient has shape {got:?}, expected {expected:?}")]
    OutputGradShape { expected: (usize, usize), got: (usize, usize) },
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("soft-update rate must be within [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("invalid layer stack: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (T::one() - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            Activation::Linear => T::one(),
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, activation }
    }
}

/// Builds a stack `dims[0] -> dims[1] -> ... -> dims[n]` with `hidden` activations
/// and `output` on the last layer.
pub fn mlp_specs(dims: &[usize], hidden: Activation, output: Activation) -> Vec<LayerSpec> {
    let n = dims.len().saturating_sub(1);
    (0..n)
        .map(|i| LayerSpec::new(dims[i], dims[i + 1], if i + 1 == n { output } else { hidden }))
        .collect()
}

/// Affine layer `y = act(W x + b)`; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub spec: LayerSpec,
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(spec: LayerSpec) -> Self {
        Self { spec, weight: Array2::zeros((spec.out_dim, spec.in_dim)), bias: Array1::zeros(spec.out_dim) }
    }

    pub fn uniform<R: Rng + ?Sized>(spec: LayerSpec, bound: f64, rng: &mut R) -> Self {
        let mut draw = || T::lit(rng.random_range(-bound..=bound));
        let weight = Array2::from_shape_simple_fn((spec.out_dim, spec.in_dim), &mut draw);
        let bias = Array1::from_shape_simple_fn(spec.out_dim, &mut draw);
        Self { spec, weight, bias }
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

static STAMPS: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    STAMPS.fetch_add(1, Ordering::Relaxed)
}

/// A stack of dense layers. Every parameter change issues a new stamp so caches
/// taken from older parameters are rejected.
#[derive(Debug)]
pub struct DenseNet<T> {
    layers: Vec<Dense<T>>,
    stamp: u64,
}

impl<T: Clone> Clone for DenseNet<T> {
    fn clone(&self) -> Self {
        Self { layers: self.layers.clone(), stamp: fresh_stamp() }
    }
}

impl<T: PartialEq> PartialEq for DenseNet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Values retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    stamp: u64,
    /// Input to each layer.
    inputs: Vec<Array2<T>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<T>>,
}

impl<T> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

/// Gradient for one layer, shaped like the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

/// Per-layer gradients of a [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad { weight: Array2::zeros(l.weight.raw_dim()), bias: Array1::zeros(l.bias.raw_dim()) })
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        self.layers.iter().flat_map(|g| g.weight.iter().chain(g.bias.iter()).copied()).collect()
    }

    pub fn scale(&mut self, k: T) {
        for g in &mut self.layers {
            g.weight.mapv_inplace(|v| v * k);
            g.bias.mapv_inplace(|v| v * k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn squared_norm(&self) -> T {
        self.layers.iter().flat_map(|g| g.weight.iter().chain(g.bias.iter())).map(|&v| v * v).sum()
    }
}

impl<T: Scalar> DenseNet<T> {
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::InvalidSpec("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            let s = l.spec;
            if s.in_dim == 0 || s.out_dim == 0 {
                return Err(NeuralError::InvalidSpec(format!("layer {i} has a zero dimension")));
            }
            if l.weight.dim() != (s.out_dim, s.in_dim) || l.bias.len() != s.out_dim {
                return Err(NeuralError::ShapeMismatch(format!("layer {i} arrays disagree with its spec")));
            }
            if i > 0 && layers[i - 1].spec.out_dim != s.in_dim {
                return Err(NeuralError::InvalidSpec(format!("layer {i} input does not match layer {} output", i - 1)));
            }
            if !l.is_finite() {
                return Err(NeuralError::InvalidSpec(format!("layer {i} holds non-finite values")));
            }
        }
        Ok(Self { layers, stamp: fresh_stamp() })
    }

    pub fn zeros(specs: &[LayerSpec]) -> Result<Self, NeuralError> {
        Self::from_layers(specs.iter().map(|&s| Dense::zeros(s)).collect())
    }

    /// Fan-in uniform initialization for hidden layers, `U(-final_bound, final_bound)`
    /// for the output layer.
    pub fn init<R: Rng + ?Sized>(specs: &[LayerSpec], final_bound: f64, rng: &mut R) -> Result<Self, NeuralError> {
        let n = specs.len();
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let bound = if i + 1 == n { final_bound } else { 1.0 / (s.in_dim.max(1) as f64).sqrt() };
                Dense::uniform(s, bound, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// Mutable access to the layers; issues a new stamp.
    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.stamp = fresh_stamp();
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[T]) -> Result<(), NeuralError> {
        if values.len() != self.num_params() {
            return Err(NeuralError::ShapeMismatch(format!("{} values for {} parameters", values.len(), self.num_params())));
        }
        let mut it = values.iter().copied();
        for l in self.layers_mut() {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    fn check_input(&self, input: &ArrayView2<T>) -> Result<(), NeuralError> {
        if input.ncols() != self.in_dim() {
            return Err(NeuralError::InputDim { expected: self.in_dim(), got: input.ncols() });
        }
        Ok(())
    }

    /// Forward pass without retaining intermediates.
    pub fn predict(&self, input: ArrayView2<T>) -> Result<Array2<T>, NeuralError> {
        self.check_input(&input)?;
        let mut x = affine(&self.layers[0], input);
        x.mapv_inplace(|z| self.layers[0].spec.activation.apply(z));
        for l in &self.layers[1..] {
            let mut z = affine(l, x.view());
            z.mapv_inplace(|v| l.spec.activation.apply(v));
            x = z;
        }
        Ok(x)
    }

    /// Forward pass for a single example.
    pub fn predict_one(&self, input: &[T]) -> Result<Vec<T>, NeuralError> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward(&self, input: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>), NeuralError> {
        self.check_input(&input)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut x = input.to_owned();
        for l in &self.layers {
            let z = affine(l, x.view());
            let a = z.mapv(|v| l.spec.activation.apply(v));
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        Ok((x, ForwardCache { stamp: self.stamp, inputs, pre }))
    }

    fn check_cache(&self, cache: &ForwardCache<T>, out_grad: &ArrayView2<T>) -> Result<(), NeuralError> {
        if cache.stamp != self.stamp || cache.pre.len() != self.layers.len() {
            return Err(NeuralError::StaleCache);
        }
        let expected = (cache.batch_size(), self.out_dim());
        if out_grad.dim() != expected {
            return Err(NeuralError::OutputGradShape { expected, got: out_grad.dim() });
        }
        Ok(())
    }

    /// Reverse pass: parameter gradients (summed over the batch) and input gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, out_grad: ArrayView2<T>) -> Result<(Gradients<T>, Array2<T>), NeuralError> {
        self.backward_impl(cache, out_grad, true).map(|(g, dx)| (g.expect("requested"), dx))
    }

    /// Reverse pass returning only the input gradient.
    pub fn backward_input(&self, cache: &ForwardCache<T>, out_grad: ArrayView2<T>) -> Result<Array2<T>, NeuralError> {
        self.backward_impl(cache, out_grad, false).map(|(_, dx)| dx)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        out_grad: ArrayView2<T>,
        want_params: bool,
    ) -> Result<(Option<Gradients<T>>, Array2<T>), NeuralError> {
        self.check_cache(cache, &out_grad)?;
        let mut grads = Vec::with_capacity(if want_params { self.layers.len() } else { 0 });
        let mut upstream = out_grad.to_owned();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let act = l.spec.activation;
            let mut dz = upstream;
            if act != Activation::Linear {
                Zip::from(&mut dz).and(&cache.pre[k]).for_each(|d, &z| *d *= act.derivative(z));
            }
            if want_params {
                grads.push(LayerGrad { weight: dz.t().dot(&cache.inputs[k]), bias: dz.sum_axis(Axis(0)) });
            }
            upstream = dz.dot(&l.weight);
        }
        grads.reverse();
        Ok((want_params.then_some(Gradients { layers: grads }), upstream))
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), NeuralError> {
        if self.specs() != other.specs() {
            return Err(NeuralError::ShapeMismatch("networks have different layer stacks".into()));
        }
        Ok(())
    }

    /// `self <- tau * source + (1 - tau) * self`, elementwise.
    pub fn soft_update_from(&mut self, source: &Self, tau: T) -> Result<(), NeuralError> {
        if !(tau >= T::zero() && tau <= T::one()) {
            return Err(NeuralError::InvalidTau(tau.as_f64()));
        }
        self.check_same_shape(source)?;
        let keep = T::one() - tau;
        for (t, s) in self.layers_mut().iter_mut().zip(&source.layers) {
            Zip::from(&mut t.weight).and(&s.weight).for_each(|t, &s| *t = tau * s + keep * *t);
            Zip::from(&mut t.bias).and(&s.bias).for_each(|t, &s| *t = tau * s + keep * *t);
        }
        Ok(())
    }

    /// Largest absolute elementwise parameter difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T, NeuralError> {
        self.check_same_shape(other)?;
        Ok(self
            .flat_params()
            .into_iter()
            .zip(other.flat_params())
            .fold(T::zero(), |m, (a, b)| m.max((a - b).abs())))
    }
}

fn affine<T: Scalar>(layer: &Dense<T>, x: ArrayView2<T>) -> Array2<T> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}
