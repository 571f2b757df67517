#![allow(dead_code)]

use genre_cnn::dataset::{split_dataset, LabeledTrack, Split, TrackRecord};
use genre_cnn::dsp::FeatureExtractor;
use genre_cnn::nn::Tensor;
use genre_cnn::synth::SyntheticCorpus;
use rand::Rng;

/// Direct-summation valid convolution (cross-correlation), stride 1.
pub fn naive_conv2d(input: &Tensor<f64>, weights: &Tensor<f64>, biases: &Tensor<f64>) -> Tensor<f64> {
    let [c_in, h, w] = *input.shape() else { panic!("input rank") };
    let [c_out, wc, kh, kw] = *weights.shape() else { panic!("weight rank") };
    assert_eq!(wc, c_in);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let x = |c: usize, i: usize, j: usize| input.data()[(c * h + i) * w + j];
    let k = |o: usize, c: usize, a: usize, b: usize| weights.data()[((o * c_in + c) * kh + a) * kw + b];
    let mut out = Vec::with_capacity(c_out * oh * ow);
    for o in 0..c_out {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = biases.data()[o];
                for c in 0..c_in {
                    for a in 0..kh {
                        for b in 0..kw {
                            s += k(o, c, a, b) * x(c, i + a, j + b);
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    Tensor::new(&[c_out, oh, ow], out).unwrap()
}

/// Non-overlapping max pooling that drops incomplete edge windows.
pub fn naive_maxpool(input: &Tensor<f64>, ph: usize, pw: usize) -> Tensor<f64> {
    let [c, h, w] = *input.shape() else { panic!("input rank") };
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Vec::new();
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for a in 0..ph {
                    for b in 0..pw {
                        m = m.max(input.data()[(ch * h + i * ph + a) * w + j * pw + b]);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(&[c, oh, ow], out).unwrap()
}

pub fn naive_dense(input: &Tensor<f64>, weights: &Tensor<f64>, biases: &Tensor<f64>) -> Tensor<f64> {
    let [m, n] = *weights.shape() else { panic!("weight rank") };
    assert_eq!(input.len(), n);
    let out = (0..m)
        .map(|r| biases.data()[r] + (0..n).map(|c| weights.data()[r * n + c] * input.data()[c]).sum::<f64>())
        .collect();
    Tensor::new(&[m], out).unwrap()
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Relative error with a small floor so vanishing gradients compare absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

pub const FD_EPS: f64 = 1e-5;

/// Central difference of `f` with respect to entry `i` of `x`.
pub fn central_difference(x: &mut [f64], i: usize, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_EPS;
    let plus = f(x);
    x[i] = orig - FD_EPS;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * FD_EPS)
}

/// Largest relative error between `analytic` and central differences over `indices`.
pub fn fd_max_rel_err(
    x: &mut [f64],
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
    f: &mut dyn FnMut(&[f64]) -> f64,
) -> f64 {
    indices.into_iter().map(|i| rel_err(analytic[i], central_difference(x, i, f))).fold(0.0, f64::max)
}

/// Synthetic band-noise corpus turned into log-mel tracks, with a 5:2:3 split.
pub fn synthetic_tracks(corpus: &SyntheticCorpus) -> Vec<(TrackRecord, LabeledTrack)> {
    let extractor = FeatureExtractor::new(corpus.sample_rate).unwrap();
    let tracks = corpus.generate().unwrap();
    let records: Vec<TrackRecord> = tracks
        .iter()
        .map(|t| TrackRecord {
            id: t.id.clone(),
            feature_path: format!("{}.mels", t.id).into(),
            genre: t.genre,
            split: Split::Train,
        })
        .collect();
    let records = split_dataset(records, [5, 2, 3], corpus.seed).unwrap();
    records
        .into_iter()
        .map(|r| {
            let t = tracks.iter().find(|t| t.id == r.id).unwrap();
            let spec = extractor.extract(&t.clip).unwrap();
            let labeled = LabeledTrack { id: t.id.clone(), genre: t.genre, spec };
            (r, labeled)
        })
        .collect()
}

pub fn tracks_in(all: &[(TrackRecord, LabeledTrack)], split: Split) -> Vec<LabeledTrack> {
    all.iter().filter(|(r, _)| r.split == split).map(|(_, t)| t.clone()).collect()
}
