//! Whole-track prediction by averaging per-segment class probabilities.

use rayon::prelude::*;

use crate::dataset::{enumerate_segments, Genre, Segment};
use crate::dsp::MelSpectrogram;
use crate::model::GenreCnn;
use crate::nn::Scalar;
use crate::{Error, Result};

/// Probability vector over the ten genres in canonical order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenreDistribution {
    probs: [f64; Genre::COUNT],
}

impl GenreDistribution {
    pub fn new(probs: [f64; Genre::COUNT]) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("{probs:?} is not a probability distribution")));
        }
        Ok(Self { probs })
    }

    pub fn uniform() -> Self {
        Self { probs: [1.0 / Genre::COUNT as f64; Genre::COUNT] }
    }

    pub fn probs(&self) -> &[f64; Genre::COUNT] {
        &self.probs
    }

    pub fn prob(&self, genre: Genre) -> f64 {
        self.probs[genre.index()]
    }

    /// Most probable genre; the lowest index wins ties.
    pub fn argmax(&self) -> Genre {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        Genre::ALL[best]
    }

    /// Unweighted mean of distributions.
    pub fn mean(dists: &[GenreDistribution]) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InsufficientInput("mean of zero distributions".into()));
        }
        let mut probs = [0.0; Genre::COUNT];
        for d in dists {
            for (acc, p) in probs.iter_mut().zip(d.probs) {
                *acc += p;
            }
        }
        let n = dists.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        Ok(Self { probs })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPrediction {
    pub track_id: String,
    pub distribution: GenreDistribution,
    pub predicted: Genre,
    pub n_segments: usize,
}

impl TrackPrediction {
    /// `id<TAB>genre<TAB>p_blues … p_rock`, probabilities to six decimals.
    pub fn to_tsv_line(&self) -> String {
        let mut line = format!("{}\t{}", self.track_id, self.predicted);
        for p in self.distribution.probs() {
            line.push_str(&format!("\t{p:.6}"));
        }
        line
    }
}

/// Softmax output of the network for one segment, dropout disabled.
pub fn predict_segment<T: Scalar>(model: &GenreCnn<T>, segment: &Segment) -> Result<GenreDistribution> {
    let probs = model.predict(&segment.values.cast::<T>())?;
    let mut out = [0.0; Genre::COUNT];
    for (o, p) in out.iter_mut().zip(probs.data()) {
        *o = p.as_f64();
    }
    GenreDistribution::new(out)
}

/// Splits the track into 256-frame segments with the given overlap, predicts
/// each, and averages. The trailing frames that do not fill a segment are ignored.
pub fn predict_track<T: Scalar>(
    model: &GenreCnn<T>,
    track_id: &str,
    spec: &MelSpectrogram,
    overlap: f64,
) -> Result<TrackPrediction> {
    let segments = enumerate_segments(spec, track_id, overlap)?;
    let dists = segments.par_iter().map(|s| predict_segment(model, s)).collect::<Result<Vec<_>>>()?;
    let distribution = GenreDistribution::mean(&dists)?;
    Ok(TrackPrediction {
        track_id: track_id.to_string(),
        predicted: distribution.argmax(),
        distribution,
        n_segments: segments.len(),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataset::segment_starts;
    use crate::nn::SgdConfig;

    fn dist(head: &[f64]) -> GenreDistribution {
        let mut p = [0.0; 10];
        p[..head.len()].copy_from_slice(head);
        GenreDistribution::new(p).unwrap()
    }

    fn spec(n_frames: usize, seed: u64) -> MelSpectrogram {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..64 * n_frames).map(|_| rng.gen_range(0.0..4.0)).collect();
        MelSpectrogram::new(values, 64, n_frames, 0.0116).unwrap()
    }

    #[test]
    fn mean_of_two() {
        let m = GenreDistribution::mean(&[dist(&[0.6, 0.4]), dist(&[0.2, 0.8])]).unwrap();
        assert!((m.probs()[0] - 0.4).abs() < 1e-15 && (m.probs()[1] - 0.6).abs() < 1e-15);
        assert_eq!(m.argmax(), Genre::Classical);
        let d = dist(&[0.1, 0.3, 0.6]);
        let m = GenreDistribution::mean(&[d, d, d]).unwrap();
        for (a, b) in m.probs().iter().zip(d.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn validation_and_ties() {
        assert!(GenreDistribution::new([0.2; 10]).is_err());
        assert!(GenreDistribution::new([-0.1, 1.1, 0., 0., 0., 0., 0., 0., 0., 0.]).is_err());
        assert_eq!(GenreDistribution::uniform().argmax(), Genre::Blues);
        assert_eq!(dist(&[0.0, 0.5, 0.5]).argmax(), Genre::Classical);
        assert!(GenreDistribution::mean(&[]).is_err());
    }

    #[test]
    fn zero_model_predicts_uniform() {
        let model = GenreCnn::<f32>::zeros(SgdConfig::default());
        let pred = predict_track(&model, "t", &spec(300, 1), 0.5).unwrap();
        for p in pred.distribution.probs() {
            assert!((p - 0.1).abs() < 1e-6);
        }
        assert_eq!(pred.predicted, Genre::Blues);
    }

    #[test]
    fn segment_count_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = GenreCnn::<f32>::new(SgdConfig::default(), &mut rng);
        let s = spec(700, 2);
        let a = predict_track(&model, "t", &s, 0.5).unwrap();
        let b = predict_track(&model, "t", &s, 0.5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_segments, segment_starts(700, 0.5).unwrap().len());
        assert!((a.distribution.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(matches!(predict_track(&model, "t", &spec(200, 3), 0.5), Err(Error::InsufficientInput(_))));
    }

    #[test]
    fn tsv_line_format() {
        let pred = TrackPrediction {
            track_id: "jazz/jazz.00042".into(),
            distribution: dist(&[0.25, 0.75]),
            predicted: Genre::Classical,
            n_segments: 3,
        };
        assert_eq!(
            pred.to_tsv_line(),
            "jazz/jazz.00042\tclassical\t0.250000\t0.750000\t0.000000\t0.000000\t0.000000\t0.000000\t0.000000\t0.000000\t0.000000\t0.000000"
        );
    }
}
