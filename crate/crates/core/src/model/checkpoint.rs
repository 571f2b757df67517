//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "GCNN"  version:u32
//! architecture: 14 × u32
//!     input_rows input_cols conv1_channels conv1_kh conv1_kw pool1_h pool1_w
//!     conv2_channels conv2_kh conv2_kw pool2_h pool2_w fc1_units n_classes
//! hyper: learning_rate:f64 momentum:f64 batch_size:u32 l2_lambda:f64 dropout_rate:f64
//! meta:  epochs_seen:u32 steps:u64 best_val_accuracy:f64 seed:u64
//! n_tensors:u32, then per tensor: rank:u32 dims:rank×u32 data:f32×Π dims
//!     (conv1.w conv1.b conv2.w conv2.b fc1.w fc1.b out.w out.b)
//! ```

use std::io::Write;
use std::path::Path;

use super::{
    GenreCnn, CONV1_KERNEL, CONV2_KERNEL, CONV_CHANNELS, FC1_UNITS, INPUT_FRAMES, INPUT_MELS, N_CLASSES, POOL,
};
use crate::nn::{LayerParams, SgdConfig, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GCNN";
pub const CHECKPOINT_VERSION: u32 = 1;

const ARCHITECTURE: [u32; 14] = [
    INPUT_MELS as u32,
    INPUT_FRAMES as u32,
    CONV_CHANNELS as u32,
    CONV1_KERNEL.0 as u32,
    CONV1_KERNEL.1 as u32,
    POOL.0 as u32,
    POOL.1 as u32,
    CONV_CHANNELS as u32,
    CONV2_KERNEL.0 as u32,
    CONV2_KERNEL.1 as u32,
    POOL.0 as u32,
    POOL.1 as u32,
    FC1_UNITS as u32,
    N_CLASSES as u32,
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMeta {
    pub epochs_seen: u32,
    pub steps: u64,
    pub best_val_accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: GenreCnn<f32>,
    pub meta: TrainingMeta,
}

pub fn encode_checkpoint(ckpt: &ModelCheckpoint) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * ckpt.model.param_count() + 256);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in ARCHITECTURE {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let h = &ckpt.model.hyper;
    out.extend_from_slice(&h.learning_rate.to_le_bytes());
    out.extend_from_slice(&h.momentum.to_le_bytes());
    out.extend_from_slice(&(h.batch_size as u32).to_le_bytes());
    out.extend_from_slice(&h.l2_lambda.to_le_bytes());
    out.extend_from_slice(&h.dropout_rate_fc.to_le_bytes());
    let m = &ckpt.meta;
    out.extend_from_slice(&m.epochs_seen.to_le_bytes());
    out.extend_from_slice(&m.steps.to_le_bytes());
    out.extend_from_slice(&m.best_val_accuracy.to_le_bytes());
    out.extend_from_slice(&m.seed.to_le_bytes());
    let layers = ckpt.model.layers();
    out.extend_from_slice(&(2 * layers.len() as u32).to_le_bytes());
    for layer in layers {
        for t in [&layer.weights, &layer.biases] {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self, expected: &[usize]) -> Result<Tensor<f32>> {
        let rank = self.u32()? as usize;
        if rank != expected.len() {
            return Err(Error::Checkpoint(format!("tensor rank {rank}, expected {}", expected.len())));
        }
        let shape = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != expected {
            return Err(Error::Checkpoint(format!("tensor shape {shape:?}, expected {expected:?}")));
        }
        let n: usize = shape.iter().product();
        let data = self.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::new(&shape, data)
    }
}

/// Parses a checkpoint. Either the whole model is returned or an error; never a partial model.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a genre-cnn checkpoint (magic is not \"GCNN\")".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let arch = (0..ARCHITECTURE.len()).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    if arch != ARCHITECTURE {
        return Err(Error::Checkpoint(format!("architecture {arch:?} does not match {ARCHITECTURE:?}")));
    }
    let learning_rate = r.f64()?;
    let momentum = r.f64()?;
    let batch_size = r.u32()? as usize;
    let l2_lambda = r.f64()?;
    let dropout_rate_fc = r.f64()?;
    let meta = TrainingMeta { epochs_seen: r.u32()?, steps: r.u64()?, best_val_accuracy: r.f64()?, seed: r.u64()? };
    let hyper = SgdConfig { learning_rate, momentum, batch_size, l2_lambda, dropout_rate_fc, seed: meta.seed };
    let n_tensors = r.u32()?;
    if n_tensors != 8 {
        return Err(Error::Checkpoint(format!("{n_tensors} tensors, expected 8")));
    }
    let template = GenreCnn::<f32>::zeros(hyper);
    let mut layers = Vec::with_capacity(4);
    for layer in template.layers() {
        let weights = r.tensor(layer.weights.shape())?;
        let biases = r.tensor(layer.biases.shape())?;
        layers.push(LayerParams::new(weights, biases));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut layers = layers.into_iter();
    let mut next = || layers.next().unwrap();
    Ok(ModelCheckpoint { model: GenreCnn { conv1: next(), conv2: next(), fc1: next(), out: next(), hyper }, meta })
}

/// Writes atomically: the data goes to a temporary sibling which is then renamed over `path`.
pub fn save_checkpoint(path: &Path, ckpt: &ModelCheckpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&encode_checkpoint(ckpt)).and_then(|_| file.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sample() -> ModelCheckpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let hyper = SgdConfig { seed: 17, ..SgdConfig::default() };
        ModelCheckpoint {
            model: GenreCnn::new(hyper, &mut rng),
            meta: TrainingMeta { epochs_seen: 12, steps: 345, best_val_accuracy: 0.625, seed: 17 },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.gcnn");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        for (a, b) in back.model.layers().iter().zip(ckpt.model.layers()) {
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.weights), bits(&b.weights));
            assert_eq!(bits(&a.biases), bits(&b.biases));
        }
        assert_eq!(back, ckpt);
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = encode_checkpoint(&sample());
        for cut in [3, 8, 100, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_) | Error::Format(_))));
        }
        let mut longer = bytes;
        longer.push(0);
        assert!(matches!(decode_checkpoint(&longer), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[4] = 2;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Checkpoint(_))));
        bytes[0..4].copy_from_slice(b"MELS");
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn architecture_mismatch() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[8] = 32;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Checkpoint(_))));
    }
}
