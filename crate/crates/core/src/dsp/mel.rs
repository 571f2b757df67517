use nalgebra::DMatrix;

use crate::{Error, Result};

/// HTK mel scale, `2595 log10(1 + f / 700)`.
pub fn hz_to_mel(f: f64) -> Result<f64> {
    if f.is_nan() || f < 0.0 {
        return Err(Error::Domain(format!("frequency {f} Hz is negative")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Peak-normalized triangular filters spaced uniformly on the mel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_mels × n_freq_bins`.
    pub weights: DMatrix<f64>,
    pub center_freqs: Vec<f64>,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_freq_bins(&self) -> usize {
        self.weights.ncols()
    }
}

/// Builds `n_mels` triangles over `n_mels + 2` break points equally spaced in
/// mel between `fmin` and `fmax`. Filter `m` rises linearly (in mel) from
/// break point `m` to a peak of 1 at `m + 1` and falls back to 0 at `m + 2`,
/// so adjacent filters sum to exactly 1 between the first and last centers.
///
/// Bin `k` sits at `k · sample_rate / (2 (n_freq_bins - 1))` Hz. A filter too
/// narrow to cover any bin is reported as a domain error rather than returned
/// empty.
pub fn build_mel_filterbank(
    n_mels: usize,
    n_freq_bins: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank> {
    if n_mels == 0 {
        return Err(Error::Domain("at least one mel band is required".into()));
    }
    if n_freq_bins < 2 {
        return Err(Error::Domain("at least two frequency bins are required".into()));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(Error::Domain(format!(
            "band edges must satisfy 0 <= fmin < fmax <= {nyquist} Hz, got [{fmin}, {fmax}]"
        )));
    }
    let mel_lo = hz_to_mel(fmin)?;
    let mel_hi = hz_to_mel(fmax)?;
    let step = (mel_hi - mel_lo) / (n_mels + 1) as f64;
    let breaks: Vec<f64> = (0..n_mels + 2).map(|i| mel_lo + step * i as f64).collect();
    let bin_hz = nyquist / (n_freq_bins - 1) as f64;
    let bin_mels = (0..n_freq_bins).map(|k| hz_to_mel(k as f64 * bin_hz)).collect::<Result<Vec<_>>>()?;

    let mut weights = DMatrix::zeros(n_mels, n_freq_bins);
    for m in 0..n_mels {
        let (lo, center, hi) = (breaks[m], breaks[m + 1], breaks[m + 2]);
        for (k, &mel) in bin_mels.iter().enumerate() {
            let rising = (mel - lo) / (center - lo);
            let falling = (hi - mel) / (hi - center);
            weights[(m, k)] = rising.min(falling).max(0.0);
        }
        if weights.row(m).iter().all(|&w| w == 0.0) {
            return Err(Error::Domain(format!(
                "mel band {m} ({:.1}-{:.1} Hz) covers no FFT bin; use fewer bands or a longer window",
                mel_to_hz(lo),
                mel_to_hz(hi)
            )));
        }
    }
    Ok(MelFilterbank { weights, center_freqs: breaks[1..=n_mels].iter().map(|&m| mel_to_hz(m)).collect(), fmin, fmax })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn mel_reference_points() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        assert!((hz_to_mel(700.0).unwrap() - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((hz_to_mel(700.0).unwrap() - 781.173).abs() < 1e-3);
        assert!((hz_to_mel(1000.0).unwrap() - 999.986).abs() < 1e-3);
        assert!(matches!(hz_to_mel(-1.0), Err(Error::Domain(_))));
        assert!((mel_to_hz(hz_to_mel(4321.0).unwrap()) - 4321.0).abs() < 1e-9);
    }

    #[test]
    fn reference_shape() {
        let fb = build_mel_filterbank(64, 257, 22_050, 0.0, 11_025.0).unwrap();
        assert_eq!(fb.weights.shape(), (64, 257));
        assert_eq!(fb.center_freqs.len(), 64);
    }

    #[test]
    fn rejects_bad_band_edges() {
        assert!(matches!(build_mel_filterbank(64, 257, 22_050, 0.0, 11_026.0), Err(Error::Domain(_))));
        assert!(matches!(build_mel_filterbank(64, 257, 22_050, 500.0, 500.0), Err(Error::Domain(_))));
        assert!(matches!(build_mel_filterbank(0, 257, 22_050, 0.0, 100.0), Err(Error::Domain(_))));
    }

    #[test]
    fn too_fine_a_filterbank_is_rejected() {
        assert!(matches!(build_mel_filterbank(256, 257, 22_050, 0.0, 11_025.0), Err(Error::Domain(_))));
    }

    fn check_invariants(fb: &MelFilterbank, sample_rate: u32) {
        let nyquist = sample_rate as f64 / 2.0;
        let n_bins = fb.n_freq_bins();
        let first = fb.center_freqs[0];
        let last = *fb.center_freqs.last().unwrap();
        for m in 0..fb.n_mels() {
            let row: Vec<f64> = fb.weights.row(m).iter().copied().collect();
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0);
            let nz: Vec<usize> = (0..n_bins).filter(|&k| row[k] > 0.0).collect();
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len(), "support of row {m} is not contiguous");
        }
        for k in 0..n_bins {
            let f = k as f64 * nyquist / (n_bins - 1) as f64;
            if f > first && f < last {
                let sum: f64 = fb.weights.column(k).iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "bin {k} ({f} Hz) sums to {sum}");
            }
        }
    }

    #[test]
    fn reference_partition_of_unity() {
        check_invariants(&build_mel_filterbank(64, 257, 22_050, 0.0, 11_025.0).unwrap(), 22_050);
    }

    proptest! {
        #[test]
        fn valid_filterbanks_partition_unity(
            n_mels in 1usize..48,
            log2_win in 9u32..12,
            sample_rate in prop::sample::select(vec![16_000u32, 22_050, 44_100]),
            lo_frac in 0.0f64..0.2,
            hi_frac in 0.5f64..=1.0,
        ) {
            let n_bins = (1usize << log2_win) / 2 + 1;
            let nyq = sample_rate as f64 / 2.0;
            if let Ok(fb) = build_mel_filterbank(n_mels, n_bins, sample_rate, lo_frac * nyq, hi_frac * nyq) {
                check_invariants(&fb, sample_rate);
            }
        }
    }
}
