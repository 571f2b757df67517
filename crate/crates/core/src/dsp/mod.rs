//! Audio decoding and log-mel-spectrogram extraction.
//!
//! Defaults reproduce the reference front end: Hann window of 512 samples
//! (23.2 ms at 22 050 Hz), hop of 256 samples, 64 HTK-style mel bands over
//! `[0, sr/2]`, power spectrogram, and `ln(1 + z)` compression.

mod cache;
mod mel;
mod stft;
mod wav;

pub use cache::{
    encode_feature_cache, read_feature_cache, read_feature_cache_bytes, write_feature_cache, FEATURE_CACHE_MAGIC,
    FEATURE_CACHE_VERSION,
};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, MelFilterbank};
pub use stft::{stft_power, StftConfig, WindowKind};
pub use wav::{decode_wav, read_wav};

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Sample rate every model-facing clip must already have.
pub const SAMPLE_RATE: u32 = 22_050;
pub const N_MELS: usize = 64;
pub const WINDOW_LEN: usize = 512;
pub const HOP_LEN: usize = 256;

/// Mono PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Domain("sample rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Log-compressed mel energies, stored mel-major (`values[m * n_frames + t]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Vec<f32>,
    n_mels: usize,
    n_frames: usize,
    pub frame_hop_seconds: f64,
}

impl MelSpectrogram {
    pub fn new(values: Vec<f32>, n_mels: usize, n_frames: usize, frame_hop_seconds: f64) -> Result<Self> {
        if values.len() != n_mels * n_frames {
            return Err(Error::Shape(format!("{} values for a {n_mels}x{n_frames} spectrogram", values.len())));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("log-mel value {bad} is not a finite non-negative number")));
        }
        Ok(Self { values, n_mels, n_frames, frame_hop_seconds })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.n_frames + frame]
    }

    /// Copies frames `[start, start + width)` of every mel row, mel-major.
    pub fn frames(&self, start: usize, width: usize) -> Result<Vec<f32>> {
        if start + width > self.n_frames {
            return Err(Error::InsufficientInput(format!(
                "frames [{start}, {}) exceed the {} available",
                start + width,
                self.n_frames
            )));
        }
        let mut out = Vec::with_capacity(self.n_mels * width);
        for m in 0..self.n_mels {
            let row = m * self.n_frames;
            out.extend_from_slice(&self.values[row + start..row + start + width]);
        }
        Ok(out)
    }
}

/// The full front end with its default parameters, built once and reused across clips.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub stft: StftConfig,
    pub filterbank: MelFilterbank,
    pub sample_rate: u32,
}

impl FeatureExtractor {
    pub fn new(sample_rate: u32) -> Result<Self> {
        let stft = StftConfig::default();
        let filterbank = build_mel_filterbank(N_MELS, stft.n_freq_bins(), sample_rate, 0.0, sample_rate as f64 / 2.0)?;
        Ok(Self { stft, filterbank, sample_rate })
    }

    /// Extracts the model-facing spectrogram. Clips at any other rate are rejected; nothing is resampled.
    pub fn extract(&self, clip: &AudioClip) -> Result<MelSpectrogram> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::Unsupported(format!(
                "sample rate {} Hz (expected {} Hz; resampling is not supported)",
                clip.sample_rate, self.sample_rate
            )));
        }
        log_mel_spectrogram(clip, &self.stft, &self.filterbank)
    }
}

/// Mel-band energies before log compression: `weights · stft_power(clip)`.
pub fn mel_energies(clip: &AudioClip, cfg: &StftConfig, fb: &MelFilterbank) -> Result<DMatrix<f64>> {
    let power = stft_power(clip, cfg)?;
    if fb.weights.ncols() != power.nrows() {
        return Err(Error::Shape(format!(
            "filterbank expects {} frequency bins, STFT produced {}",
            fb.weights.ncols(),
            power.nrows()
        )));
    }
    Ok(&fb.weights * power)
}

/// `ln(1 + mel energy)` for every band and frame.
pub fn log_mel_spectrogram(clip: &AudioClip, cfg: &StftConfig, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    let energies = mel_energies(clip, cfg, fb)?;
    let (n_mels, n_frames) = energies.shape();
    let mut values = Vec::with_capacity(n_mels * n_frames);
    for m in 0..n_mels {
        for t in 0..n_frames {
            values.push(energies[(m, t)].ln_1p() as f32);
        }
    }
    MelSpectrogram::new(values, n_mels, n_frames, cfg.hop_len as f64 / clip.sample_rate as f64)
}
