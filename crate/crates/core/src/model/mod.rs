//! The fixed genre CNN:
//!
//! ```text
//! input 1×64×256
//!  → conv 64@3×3 → ReLU → max-pool 2×4     (64×62×254 → 64×31×63)
//!  → conv 64@3×5 → ReLU → max-pool 2×4     (64×29×59  → 64×14×14)
//!  → flatten 12 544 → dense 32 → ReLU → dropout
//!  → dense 10 → softmax
//! ```
//!
//! All convolutions are valid (unpadded) with stride 1.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, ModelCheckpoint, TrainingMeta,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::shape_err;
use crate::nn::{
    conv2d_backward, conv2d_forward, conv2d_param_grads, cross_entropy_loss, dense_backward, dense_forward, dropout,
    dropout_backward, maxpool_backward, maxpool_forward, relu, relu_backward, softmax, softmax_cross_entropy_backward,
    LayerParams, PoolIndices, Scalar, SgdConfig, Tensor,
};
use crate::{Error, Result};

pub const INPUT_MELS: usize = 64;
pub const INPUT_FRAMES: usize = 256;
pub const N_CLASSES: usize = 10;
pub const CONV_CHANNELS: usize = 64;
pub const CONV1_KERNEL: (usize, usize) = (3, 3);
pub const CONV2_KERNEL: (usize, usize) = (3, 5);
pub const POOL: (usize, usize) = (2, 4);
pub const FC1_UNITS: usize = 32;
pub const FLAT_DIM: usize = CONV_CHANNELS * 14 * 14;

/// Hidden layers whose activations can be inspected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HiddenLayer {
    Conv1,
    Pool1,
    Conv2,
    Pool2,
    Fc1,
}

impl HiddenLayer {
    pub const ALL: [HiddenLayer; 5] = [Self::Conv1, Self::Pool1, Self::Conv2, Self::Pool2, Self::Fc1];

    /// `(channels, rows, cols)` of the layer's output; `fc1` is `32×1×1`.
    pub fn output_shape(self) -> (usize, usize, usize) {
        match self {
            Self::Conv1 => (CONV_CHANNELS, 62, 254),
            Self::Pool1 => (CONV_CHANNELS, 31, 63),
            Self::Conv2 => (CONV_CHANNELS, 29, 59),
            Self::Pool2 => (CONV_CHANNELS, 14, 14),
            Self::Fc1 => (FC1_UNITS, 1, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Conv1 => "conv1",
            Self::Pool1 => "pool1",
            Self::Conv2 => "conv2",
            Self::Pool2 => "pool2",
            Self::Fc1 => "fc1",
        }
    }
}

impl std::str::FromStr for HiddenLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown layer {s:?} (expected conv1, pool1, conv2, pool2 or fc1)")))
    }
}

impl std::fmt::Display for HiddenLayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenreCnn<T> {
    pub conv1: LayerParams<T>,
    pub conv2: LayerParams<T>,
    pub fc1: LayerParams<T>,
    pub out: LayerParams<T>,
    pub hyper: SgdConfig,
}

/// Intermediate values kept by a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Tensor<T>,
    conv1: Tensor<T>,
    pool1: Tensor<T>,
    pool1_idx: PoolIndices,
    conv2: Tensor<T>,
    pool2: Tensor<T>,
    pool2_idx: PoolIndices,
    fc1: Tensor<T>,
    dropout_mask: Option<Tensor<T>>,
    fc1_dropped: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Post-ReLU (or pooled) output of a hidden layer; `fc1` is taken before dropout.
    pub fn activation(&self, layer: HiddenLayer) -> &Tensor<T> {
        match layer {
            HiddenLayer::Conv1 => &self.conv1,
            HiddenLayer::Pool1 => &self.pool1,
            HiddenLayer::Conv2 => &self.conv2,
            HiddenLayer::Pool2 => &self.pool2,
            HiddenLayer::Fc1 => &self.fc1,
        }
    }

    /// Flat input index selected by each output of a pooling layer; `None` for other layers.
    pub fn pool_argmax(&self, layer: HiddenLayer) -> Option<&[usize]> {
        match layer {
            HiddenLayer::Pool1 => Some(self.pool1_idx.argmax()),
            HiddenLayer::Pool2 => Some(self.pool2_idx.argmax()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn cache(&self) -> Option<&ForwardCache<T>> {
        self.cache.as_ref()
    }

    /// Drops the cached activations, keeping only the outputs.
    pub fn release_cache(&mut self) {
        self.cache = None;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub weights: Tensor<T>,
    pub biases: Tensor<T>,
}

/// Parameter gradients for all four layers, in `conv1, conv2, fc1, out` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: [LayerGrads<T>; 4],
}

impl<T: Scalar> Gradients<T> {
    fn add_assign(&mut self, other: &Gradients<T>) -> Result<()> {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign(&b.weights)?;
            a.biases.add_assign(&b.biases)?;
        }
        Ok(())
    }

    fn scale(&mut self, factor: T) {
        for l in &mut self.layers {
            l.weights.scale(factor);
            l.biases.scale(factor);
        }
    }
}

impl<T: Scalar> GenreCnn<T> {
    /// Kaiming-uniform weights for the ReLU layers, LeCun-uniform for the output layer, zero biases.
    pub fn new<R: Rng + ?Sized>(hyper: SgdConfig, rng: &mut R) -> Self {
        let relu_gain = 2f64.sqrt();
        Self {
            conv1: LayerParams::init_uniform(&[CONV_CHANNELS, 1, CONV1_KERNEL.0, CONV1_KERNEL.1], relu_gain, rng),
            conv2: LayerParams::init_uniform(
                &[CONV_CHANNELS, CONV_CHANNELS, CONV2_KERNEL.0, CONV2_KERNEL.1],
                relu_gain,
                rng,
            ),
            fc1: LayerParams::init_uniform(&[FC1_UNITS, FLAT_DIM], relu_gain, rng),
            out: LayerParams::init_uniform(&[N_CLASSES, FC1_UNITS], 1.0, rng),
            hyper,
        }
    }

    /// All parameters zero; predicts the uniform distribution for any input.
    pub fn zeros(hyper: SgdConfig) -> Self {
        Self {
            conv1: LayerParams::zeros(&[CONV_CHANNELS, 1, CONV1_KERNEL.0, CONV1_KERNEL.1], CONV_CHANNELS),
            conv2: LayerParams::zeros(&[CONV_CHANNELS, CONV_CHANNELS, CONV2_KERNEL.0, CONV2_KERNEL.1], CONV_CHANNELS),
            fc1: LayerParams::zeros(&[FC1_UNITS, FLAT_DIM], FC1_UNITS),
            out: LayerParams::zeros(&[N_CLASSES, FC1_UNITS], N_CLASSES),
            hyper,
        }
    }

    pub fn layers(&self) -> [&LayerParams<T>; 4] {
        [&self.conv1, &self.conv2, &self.fc1, &self.out]
    }

    pub fn layers_mut(&mut self) -> [&mut LayerParams<T>; 4] {
        [&mut self.conv1, &mut self.conv2, &mut self.fc1, &mut self.out]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> GenreCnn<U> {
        GenreCnn {
            conv1: self.conv1.cast(),
            conv2: self.conv2.cast(),
            fc1: self.fc1.cast(),
            out: self.out.cast(),
            hyper: self.hyper,
        }
    }

    fn check_input(segment: &Tensor<T>) -> Result<()> {
        if segment.shape() != [1, INPUT_MELS, INPUT_FRAMES] {
            return Err(shape_err(format!(
                "model input must be 1x{INPUT_MELS}x{INPUT_FRAMES}, got {:?}",
                segment.shape()
            )));
        }
        Ok(())
    }

    /// Runs the network, keeping every intermediate activation. Dropout is only active when `training`.
    pub fn forward<R: Rng + ?Sized>(&self, segment: &Tensor<T>, training: bool, rng: &mut R) -> Result<ForwardPass<T>> {
        Self::check_input(segment)?;
        let conv1 = relu(&conv2d_forward(segment, &self.conv1.weights, &self.conv1.biases)?);
        let (pool1, pool1_idx) = maxpool_forward(&conv1, POOL.0, POOL.1)?;
        let conv2 = relu(&conv2d_forward(&pool1, &self.conv2.weights, &self.conv2.biases)?);
        let (pool2, pool2_idx) = maxpool_forward(&conv2, POOL.0, POOL.1)?;
        debug_assert_eq!(conv1.shape(), [64, 62, 254]);
        debug_assert_eq!(pool1.shape(), [64, 31, 63]);
        debug_assert_eq!(conv2.shape(), [64, 29, 59]);
        debug_assert_eq!(pool2.shape(), [64, 14, 14]);
        let fc1 = relu(&dense_forward(&pool2, &self.fc1.weights, &self.fc1.biases)?);
        let (fc1_dropped, dropout_mask) = dropout(&fc1, self.hyper.dropout_rate_fc, training, rng)?;
        let logits = dense_forward(&fc1_dropped, &self.out.weights, &self.out.biases)?;
        let probs = softmax(&logits)?;
        Ok(ForwardPass {
            logits,
            probs,
            cache: Some(ForwardCache {
                input: segment.clone(),
                conv1,
                pool1,
                pool1_idx,
                conv2,
                pool2,
                pool2_idx,
                fc1,
                dropout_mask,
                fc1_dropped,
            }),
        })
    }

    /// Inference-mode forward pass (dropout off) that keeps the activations.
    pub fn forward_eval(&self, segment: &Tensor<T>) -> Result<ForwardPass<T>> {
        // The RNG is never drawn from when dropout is disabled.
        self.forward(segment, false, &mut rand::rngs::mock::StepRng::new(0, 0))
    }

    /// Class probabilities with dropout disabled.
    pub fn predict(&self, segment: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_eval(segment)?.probs)
    }

    /// Cross-entropy of one segment with dropout disabled.
    pub fn loss(&self, segment: &Tensor<T>, label: usize) -> Result<T> {
        cross_entropy_loss(&self.predict(segment)?, label)
    }

    /// Gradients of the cross-entropy loss of the pass that produced `pass`.
    pub fn gradients(&self, pass: &ForwardPass<T>, label: usize) -> Result<Gradients<T>> {
        let cache = pass
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward needs a forward pass with its activation cache".into()))?;
        let g_logits = softmax_cross_entropy_backward(&pass.probs, label)?;
        let out = dense_backward(&cache.fc1_dropped, &self.out.weights, &g_logits)?;
        let g_fc1 = relu_backward(&cache.fc1, &dropout_backward(cache.dropout_mask.as_ref(), &out.input)?)?;
        let fc1 = dense_backward(&cache.pool2, &self.fc1.weights, &g_fc1)?;
        let g_conv2 = relu_backward(&cache.conv2, &maxpool_backward(&cache.pool2_idx, &fc1.input)?)?;
        let conv2 = conv2d_backward(&cache.pool1, &self.conv2.weights, &g_conv2)?;
        let g_conv1 = relu_backward(&cache.conv1, &maxpool_backward(&cache.pool1_idx, &conv2.input)?)?;
        let (conv1_w, conv1_b) = conv2d_param_grads(&cache.input, &self.conv1.weights, &g_conv1)?;
        Ok(Gradients {
            layers: [
                LayerGrads { weights: conv1_w, biases: conv1_b },
                LayerGrads { weights: conv2.weights, biases: conv2.biases },
                LayerGrads { weights: fc1.weights, biases: fc1.biases },
                LayerGrads { weights: out.weights, biases: out.biases },
            ],
        })
    }

    /// Stores single-sample gradients into the layers' gradient buffers.
    pub fn backward(&mut self, pass: &ForwardPass<T>, label: usize) -> Result<()> {
        let grads = self.gradients(pass, label)?;
        self.set_grads(grads);
        Ok(())
    }

    fn set_grads(&mut self, grads: Gradients<T>) {
        for (layer, g) in self.layers_mut().into_iter().zip(grads.layers) {
            layer.weight_grads = g.weights;
            layer.bias_grads = g.biases;
        }
    }

    /// Forward and backward over a `B×1×64×256` batch in training mode.
    ///
    /// The layers' gradient buffers receive the batch-mean gradient; the mean
    /// cross-entropy is returned. Samples may be processed in parallel, but each
    /// draws its dropout mask from its own seed taken from `rng` in batch order
    /// and gradients are summed in batch order, so results do not depend on
    /// scheduling.
    pub fn batch_gradients<R: Rng + ?Sized>(
        &mut self,
        batch: &Tensor<T>,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<f64> {
        let [b, 1, INPUT_MELS, INPUT_FRAMES] = *batch.shape() else {
            return Err(shape_err(format!("batch must be Bx1x{INPUT_MELS}x{INPUT_FRAMES}, got {:?}", batch.shape())));
        };
        if b == 0 || labels.len() != b {
            return Err(shape_err(format!("{} labels for a batch of {b}", labels.len())));
        }
        let sample_len = INPUT_MELS * INPUT_FRAMES;
        let seeds: Vec<u64> = (0..b).map(|_| rng.gen()).collect();
        let this = &*self;
        let per_sample: Vec<(T, Gradients<T>)> = (0..b)
            .into_par_iter()
            .map(|i| {
                let segment = Tensor::new(
                    &[1, INPUT_MELS, INPUT_FRAMES],
                    batch.data()[i * sample_len..(i + 1) * sample_len].to_vec(),
                )?;
                let mut sample_rng = ChaCha8Rng::seed_from_u64(seeds[i]);
                let pass = this.forward(&segment, true, &mut sample_rng)?;
                let loss = cross_entropy_loss(&pass.probs, labels[i])?;
                Ok((loss, this.gradients(&pass, labels[i])?))
            })
            .collect::<Result<_>>()?;
        let mut iter = per_sample.into_iter();
        let (first_loss, mut total) = iter.next().expect("non-empty batch");
        let mut loss_sum = first_loss.as_f64();
        for (loss, grads) in iter {
            loss_sum += loss.as_f64();
            total.add_assign(&grads)?;
        }
        total.scale(T::one() / T::from_f64_lossy(b as f64));
        self.set_grads(total);
        Ok(loss_sum / b as f64)
    }
}
