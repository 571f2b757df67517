use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{AudioClip, HOP_LEN, WINDOW_LEN};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)`.
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop_len: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: WINDOW_LEN, hop_len: HOP_LEN, window: WindowKind::Hann }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_len == 0 || self.hop_len > self.window_len {
            return Err(Error::Config(format!("hop length {} must be in 1..={}", self.hop_len, self.window_len)));
        }
        Ok(())
    }

    pub fn n_freq_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Number of whole windows that fit in `len` samples (no padding).
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop_len + 1
        }
    }
}

/// Squared-magnitude STFT, `n_freq_bins × n_frames`. Trailing partial windows are dropped.
pub fn stft_power(clip: &AudioClip, cfg: &StftConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let n = cfg.window_len;
    let n_frames = cfg.n_frames(clip.samples.len());
    if n_frames == 0 {
        return Err(Error::InsufficientInput(format!(
            "{} samples is shorter than one {n}-sample window",
            clip.samples.len()
        )));
    }
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let n_bins = cfg.n_freq_bins();
    let mut power = DMatrix::zeros(n_bins, n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..n_frames {
        let frame = &clip.samples[t * cfg.hop_len..t * cfg.hop_len + n];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(x as f64 * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf[..n_bins].iter().enumerate() {
            power[(k, t)] = c.norm_sqr();
        }
    }
    Ok(power)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct O(N^2) DFT of one frame.
    fn naive_power(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..n / 2 + 1)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &x) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    fn noise(len: usize, seed: u64) -> Vec<f32> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) as f32 / (1u64 << 31) as f32) - 0.5
            })
            .collect()
    }

    #[test]
    fn frame_count_has_no_padding() {
        let cfg = StftConfig::default();
        let clip = AudioClip::new(vec![0.0; 512 + 256 * 3 + 100], 22_050).unwrap();
        let p = stft_power(&clip, &cfg).unwrap();
        assert_eq!(p.shape(), (257, 4));
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_clip_is_insufficient() {
        let clip = AudioClip::new(vec![0.0; 511], 22_050).unwrap();
        assert!(matches!(stft_power(&clip, &StftConfig::default()), Err(Error::InsufficientInput(_))));
    }

    #[test]
    fn invalid_hop_is_rejected() {
        let clip = AudioClip::new(vec![0.0; 1024], 22_050).unwrap();
        for hop in [0, 513] {
            let cfg = StftConfig { hop_len: hop, ..StftConfig::default() };
            assert!(matches!(stft_power(&clip, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn matches_naive_dft() {
        let cfg = StftConfig { window_len: 64, hop_len: 32, window: WindowKind::Hann };
        let clip = AudioClip::new(noise(200, 3), 8000).unwrap();
        let p = stft_power(&clip, &cfg).unwrap();
        let w = cfg.window.coefficients(64);
        for t in 0..p.ncols() {
            let frame: Vec<f64> = (0..64).map(|i| clip.samples[t * 32 + i] as f64 * w[i]).collect();
            for (k, expected) in naive_power(&frame).into_iter().enumerate() {
                assert!((p[(k, t)] - expected).abs() <= 1e-9 * (1.0 + expected));
            }
        }
    }

    #[test]
    fn bin_centred_sine_concentrates_in_its_bin() {
        let n = 512;
        let k = 37;
        let sr = 22_050;
        let samples = (0..n * 3).map(|i| (2.0 * PI * k as f64 * i as f64 / n as f64).sin() as f32).collect();
        let clip = AudioClip::new(samples, sr).unwrap();
        let cfg = StftConfig { window_len: n, hop_len: n, window: WindowKind::Rectangular };
        let p = stft_power(&clip, &cfg).unwrap();
        for t in 0..p.ncols() {
            let total: f64 = p.column(t).iter().sum();
            assert!(p[(k, t)] >= 0.99 * total);
        }
    }

    #[test]
    fn per_frame_parseval() {
        let cfg = StftConfig::default();
        let clip = AudioClip::new(noise(512 * 4, 11), 22_050).unwrap();
        let p = stft_power(&clip, &cfg).unwrap();
        let w = cfg.window.coefficients(512);
        for t in 0..p.ncols() {
            let energy: f64 = (0..512).map(|i| (clip.samples[t * 256 + i] as f64 * w[i]).powi(2)).sum();
            let spectral: f64 = (0..257).map(|k| if k == 0 || k == 256 { p[(k, t)] } else { 2.0 * p[(k, t)] }).sum();
            assert!((spectral - 512.0 * energy).abs() / (512.0 * energy) < 1e-6);
        }
    }
}
