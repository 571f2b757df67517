//! Synthetic corpora of band-limited noise, one mel band per genre.
//!
//! Used by the test suites and handy for smoke-testing a full pipeline
//! without a licensed dataset.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::dataset::Genre;
use crate::dsp::{hz_to_mel, mel_to_hz, AudioClip};
use crate::{Error, Result};

/// Gaussian noise restricted to `[f_lo, f_hi]` Hz by zeroing FFT bins, scaled to the given RMS.
pub fn band_noise<R: Rng + ?Sized>(
    n_samples: usize,
    sample_rate: u32,
    f_lo: f64,
    f_hi: f64,
    rms: f64,
    rng: &mut R,
) -> Vec<f32> {
    let mut buf: Vec<Complex<f64>> = (0..n_samples).map(|_| Complex::new(rng.sample(StandardNormal), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n_samples).process(&mut buf);
    let bin_hz = sample_rate as f64 / n_samples as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n_samples - k) as f64 * bin_hz;
        if f < f_lo || f > f_hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n_samples).process(&mut buf);
    let current = (buf.iter().map(|c| c.re * c.re).sum::<f64>() / n_samples as f64).sqrt();
    let gain = if current > 0.0 { rms / current } else { 0.0 };
    buf.iter().map(|c| (c.re * gain) as f32).collect()
}

/// Frequency band of genre `index` out of `n_genres`: equal-width mel
/// intervals between 150 Hz and 6 kHz, each trimmed to its central 60% so
/// neighbouring genres do not share energy.
pub fn genre_band(index: usize, n_genres: usize) -> (f64, f64) {
    let lo = hz_to_mel(150.0).unwrap();
    let hi = hz_to_mel(6000.0).unwrap();
    let width = (hi - lo) / n_genres as f64;
    let start = lo + width * index as f64;
    (mel_to_hz(start + 0.2 * width), mel_to_hz(start + 0.8 * width))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub n_genres: usize,
    pub tracks_per_genre: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self { n_genres: 4, tracks_per_genre: 10, seconds: 10.0, sample_rate: 22_050, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTrack {
    pub id: String,
    pub genre: Genre,
    pub clip: AudioClip,
}

impl SyntheticCorpus {
    /// Tracks of the first `n_genres` genres; loudness varies per track between 0.05 and 0.3 RMS.
    pub fn generate(&self) -> Result<Vec<SyntheticTrack>> {
        if self.n_genres == 0 || self.n_genres > Genre::COUNT {
            return Err(Error::Config(format!("{} genres requested (1-10 supported)", self.n_genres)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n_samples = (self.seconds * self.sample_rate as f64).round() as usize;
        let mut tracks = Vec::with_capacity(self.n_genres * self.tracks_per_genre);
        for (g, genre) in Genre::ALL.iter().take(self.n_genres).enumerate() {
            let (f_lo, f_hi) = genre_band(g, self.n_genres);
            for i in 0..self.tracks_per_genre {
                let rms = rng.gen_range(0.05..0.3);
                let samples = band_noise(n_samples, self.sample_rate, f_lo, f_hi, rms, &mut rng);
                tracks.push(SyntheticTrack {
                    id: format!("{genre}.{i:05}"),
                    genre: *genre,
                    clip: AudioClip::new(samples, self.sample_rate)?,
                });
            }
        }
        Ok(tracks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft_power, StftConfig};

    #[test]
    fn bands_are_disjoint_and_ordered() {
        let bands: Vec<_> = (0..4).map(|i| genre_band(i, 4)).collect();
        for w in bands.windows(2) {
            assert!(w[0].0 < w[0].1 && w[0].1 < w[1].0);
        }
    }

    #[test]
    fn noise_energy_stays_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = band_noise(22_050, 22_050, 1000.0, 2000.0, 0.2, &mut rng);
        let rms = (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        assert!((rms - 0.2).abs() < 1e-4);
        let clip = AudioClip::new(x, 22_050).unwrap();
        let p = stft_power(&clip, &StftConfig::default()).unwrap();
        let bin_hz = 22_050.0 / 512.0;
        let (mut inside, mut total) = (0.0, 0.0);
        for k in 0..p.nrows() {
            let e: f64 = p.row(k).iter().sum();
            total += e;
            let f = k as f64 * bin_hz;
            if (900.0..=2100.0).contains(&f) {
                inside += e;
            }
        }
        assert!(inside / total > 0.99);
    }

    #[test]
    fn corpus_is_reproducible() {
        let cfg = SyntheticCorpus { tracks_per_genre: 2, seconds: 0.5, ..SyntheticCorpus::default() };
        let a = cfg.generate().unwrap();
        let b = cfg.generate().unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a[5].clip, b[5].clip);
        assert_eq!(a[2].genre, Genre::Classical);
        assert!(SyntheticCorpus { n_genres: 11, ..cfg }.generate().is_err());
    }
}
