use rand::Rng;

use super::{Scalar, Tensor};
use crate::{Error, Result};

/// A layer's weights and biases together with their gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Tensor<T>,
    pub biases: Tensor<T>,
    pub weight_grads: Tensor<T>,
    pub bias_grads: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn new(weights: Tensor<T>, biases: Tensor<T>) -> Self {
        Self {
            weight_grads: Tensor::zeros(weights.shape()),
            bias_grads: Tensor::zeros(biases.shape()),
            weights,
            biases,
        }
    }

    pub fn zeros(weight_shape: &[usize], n_biases: usize) -> Self {
        Self::new(Tensor::zeros(weight_shape), Tensor::zeros(&[n_biases]))
    }

    /// Uniform weights in `±gain · sqrt(3 / fan_in)` with zero biases, where
    /// `fan_in` is the product of all but the first weight dimension.
    /// `gain = sqrt(2)` gives Kaiming-uniform initialisation for ReLU layers.
    pub fn init_uniform<R: Rng + ?Sized>(weight_shape: &[usize], gain: f64, rng: &mut R) -> Self {
        let fan_in: usize = weight_shape[1..].iter().product();
        let bound = gain * (3.0 / fan_in as f64).sqrt();
        let weights = Tensor::from_fn(weight_shape, |_| T::from_f64_lossy(rng.gen_range(-bound..bound)));
        Self::new(weights, Tensor::zeros(&[weight_shape[0]]))
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn zero_grads(&mut self) {
        self.weight_grads.data_mut().fill(T::zero());
        self.bias_grads.data_mut().fill(T::zero());
    }

    pub fn cast<U: Scalar>(&self) -> LayerParams<U> {
        LayerParams {
            weights: self.weights.cast(),
            biases: self.biases.cast(),
            weight_grads: self.weight_grads.cast(),
            bias_grads: self.bias_grads.cast(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub dropout_rate_fc: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, batch_size: 32, l2_lambda: 1e-4, dropout_rate_fc: 0.5, seed: 0 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} = {v} is out of range")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate", self.learning_rate);
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", self.momentum);
        }
        if self.batch_size == 0 {
            return bad("batch size", 0.0);
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("L2 lambda", self.l2_lambda);
        }
        if !(0.0..1.0).contains(&self.dropout_rate_fc) {
            return bad("dropout rate", self.dropout_rate_fc);
        }
        Ok(())
    }
}

/// Momentum SGD with L2 weight decay on weights (not biases):
/// `v ← μ v − lr (g + λ w)`, `w ← w + v`.
#[derive(Debug, Clone, Default)]
pub struct Sgd<T> {
    velocity: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new() -> Self {
        Self { velocity: Vec::new() }
    }

    /// Applies one update using the gradients currently stored in `layers`.
    /// The layer list must be passed in the same order on every call.
    pub fn step(&mut self, layers: &mut [&mut LayerParams<T>], cfg: &SgdConfig) -> Result<()> {
        cfg.validate()?;
        if self.velocity.is_empty() {
            self.velocity =
                layers.iter().map(|l| (Tensor::zeros(l.weights.shape()), Tensor::zeros(l.biases.shape()))).collect();
        }
        if self.velocity.len() != layers.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} layers, {} were passed",
                self.velocity.len(),
                layers.len()
            )));
        }
        let lr = T::from_f64_lossy(cfg.learning_rate);
        let mu = T::from_f64_lossy(cfg.momentum);
        let lambda = T::from_f64_lossy(cfg.l2_lambda);
        for (layer, (vw, vb)) in layers.iter_mut().zip(self.velocity.iter_mut()) {
            layer.weights.ensure_same_shape(vw)?;
            layer.biases.ensure_same_shape(vb)?;
            let LayerParams { weights, biases, weight_grads, bias_grads } = &mut **layer;
            for ((w, &g), v) in weights.data_mut().iter_mut().zip(weight_grads.data()).zip(vw.data_mut()) {
                *v = mu * *v - lr * (g + lambda * *w);
                *w += *v;
            }
            for ((b, &g), v) in biases.data_mut().iter_mut().zip(bias_grads.data()).zip(vb.data_mut()) {
                *v = mu * *v - lr * g;
                *b += *v;
            }
        }
        Ok(())
    }
}

/// `(λ/2) Σ w²` over the weights of every layer; its gradient is the `λ w` used by [`Sgd`].
pub fn l2_penalty<T: Scalar>(layers: &[&LayerParams<T>], lambda: f64) -> f64 {
    0.5 * lambda * layers.iter().map(|l| l.weights.squared_norm().as_f64()).sum::<f64>()
}
