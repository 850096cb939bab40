use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients, NeuralError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First and second moment estimates mirroring a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Gradients<T>,
    pub v: Gradients<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &DenseNet<T>, config: AdamConfig) -> Self {
        Self { config, m: Gradients::zeros_like(net), v: Gradients::zeros_like(net), t: 0 }
    }

    /// One bias-corrected Adam descent step on `net` along `grads`.
    ///
    /// Non-finite gradients are rejected before anything is modified.
    pub fn step(&mut self, net: &mut DenseNet<T>, grads: &Gradients<T>) -> Result<(), NeuralError> {
        if grads.layers.len() != net.layers.len() || self.m.layers.len() != net.layers.len() {
            return Err(NeuralError::ShapeMismatch("gradient layer count differs from network".into()));
        }
        for (i, (g, l)) in grads.layers.iter().zip(net.layers()).enumerate() {
            if g.weight.dim() != l.weight.dim() || g.bias.len() != l.bias.len() {
                return Err(NeuralError::ShapeMismatch(format!("gradient for layer {i} has the wrong shape")));
            }
            if !g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()) {
                return Err(NeuralError::NonFiniteGradient { layer: i });
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::one() - b1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = T::one() - b2.powi(self.t.min(i32::MAX as u64) as i32);
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.m.layers).zip(&mut self.v.layers) {
            Zip::from(&mut layer.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
