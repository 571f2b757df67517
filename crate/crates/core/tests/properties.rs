mod common;

use common::*;
use genre_cnn::analysis::{lambda_max, lasso_fit, lda_fit, receptive_field, Neuron};
use genre_cnn::dataset::segment_starts;
use genre_cnn::model::{GenreCnn, HiddenLayer, INPUT_FRAMES, INPUT_MELS};
use genre_cnn::nn::{conv2d_backward, conv2d_forward, dense_forward, maxpool_forward, SgdConfig, Tensor};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn activation(model: &GenreCnn<f32>, x: &Tensor<f32>, layer: HiddenLayer, n: Neuron) -> f32 {
    let pass = model.forward_eval(x).unwrap();
    pass.cache().unwrap().activation(layer).data()[n.flat_index(layer)]
}

fn random_neuron(rng: &mut ChaCha8Rng, layer: HiddenLayer) -> Neuron {
    let (c, h, w) = layer.output_shape();
    Neuron::new(rng.gen_range(0..c), rng.gen_range(0..h), rng.gen_range(0..w))
}

/// Strictly positive weights and biases keep every unit active, so raising an
/// input cell raises everything downstream of it.
fn positive_model(seed: u64) -> GenreCnn<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = GenreCnn::<f32>::zeros(SgdConfig::default());
    for layer in m.layers_mut() {
        for v in layer.weights.data_mut().iter_mut().chain(layer.biases.data_mut()) {
            *v = rng.gen_range(0.01..0.1);
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cells_outside_the_receptive_field_never_matter(seed in any::<u64>(), layer_idx in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = HiddenLayer::ALL[layer_idx];
        let model = GenreCnn::<f32>::new(SgdConfig::default(), &mut rng);
        let neuron = random_neuron(&mut rng, layer);
        let field = receptive_field(layer, neuron).unwrap();
        let x = Tensor::from_fn(&[1, INPUT_MELS, INPUT_FRAMES], |_| rng.gen_range(0.0..3.0));
        let base = activation(&model, &x, layer, neuron);
        let mut perturbed = x.clone();
        for _ in 0..200 {
            let (r, c) = (rng.gen_range(0..INPUT_MELS), rng.gen_range(0..INPUT_FRAMES));
            if !field.contains(r, c) {
                perturbed.data_mut()[r * INPUT_FRAMES + c] += rng.gen_range(-50.0..50.0);
            }
        }
        prop_assert_eq!(activation(&model, &perturbed, layer, neuron).to_bits(), base.to_bits());
    }

    #[test]
    fn receptive_field_corners_can_matter(seed in any::<u64>(), layer_idx in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = HiddenLayer::ALL[layer_idx];
        let model = positive_model(seed);
        let neuron = random_neuron(&mut rng, layer);
        let f = receptive_field(layer, neuron).unwrap();
        let x = Tensor::from_fn(&[1, INPUT_MELS, INPUT_FRAMES], |_| rng.gen_range(0.0..1.0));
        let base = activation(&model, &x, layer, neuron);
        for (r, c) in [(f.rows.0, f.cols.0), (f.rows.0, f.cols.1 - 1), (f.rows.1 - 1, f.cols.0), (f.rows.1 - 1, f.cols.1 - 1)] {
            let mut bumped = x.clone();
            bumped.data_mut()[r * INPUT_FRAMES + c] += 1000.0;
            prop_assert!(activation(&model, &bumped, layer, neuron) > base, "corner ({}, {}) of {:?}", r, c, f);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fast_layers_match_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ci, co, kh, kw) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..6));
        let shape = [ci, kh + rng.gen_range(0..6), kw + rng.gen_range(0..6)];
        let x = random_tensor(&mut rng, &shape, 1.0);
        let k = random_tensor(&mut rng, &[co, ci, kh, kw], 1.0);
        let b = random_tensor(&mut rng, &[co], 1.0);
        prop_assert!(max_abs_diff(conv2d_forward(&x, &k, &b).unwrap().data(), naive_conv2d(&x, &k, &b).data()) < 1e-12);

        let (ph, pw) = (rng.gen_range(1..4), rng.gen_range(1..5));
        let pool_shape = [ci, ph * rng.gen_range(1..4) + rng.gen_range(0..ph), pw * rng.gen_range(1..4) + rng.gen_range(0..pw)];
        let p = random_tensor(&mut rng, &pool_shape, 1.0);
        prop_assert_eq!(maxpool_forward(&p, ph, pw).unwrap().0, naive_maxpool(&p, ph, pw));

        let (m, n) = (rng.gen_range(1..10), rng.gen_range(1..30));
        let v = random_tensor(&mut rng, &[n], 1.0);
        let w = random_tensor(&mut rng, &[m, n], 1.0);
        let bb = random_tensor(&mut rng, &[m], 1.0);
        prop_assert!(max_abs_diff(dense_forward(&v, &w, &bb).unwrap().data(), naive_dense(&v, &w, &bb).data()) < 1e-12);
    }

    #[test]
    fn conv_input_gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ci, co, kh, kw) = (rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
        let shape = [ci, kh + rng.gen_range(0..4), kw + rng.gen_range(0..4)];
        let x = random_tensor(&mut rng, &shape, 1.0);
        let k = random_tensor(&mut rng, &[co, ci, kh, kw], 1.0);
        let b = random_tensor(&mut rng, &[co], 1.0);
        let r = random_tensor(&mut rng, &[co, shape[1] - kh + 1, shape[2] - kw + 1], 1.0);
        let g = conv2d_backward(&x, &k, &r).unwrap();
        let mut xv = x.data().to_vec();
        let err = fd_max_rel_err(&mut xv, g.input.data(), 0..x.len(), &mut |v| {
            let out = conv2d_forward(&Tensor::new(&shape, v.to_vec()).unwrap(), &k, &b).unwrap();
            out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        });
        prop_assert!(err < 1e-6, "{}", err);
    }

    #[test]
    fn segment_starts_tile_the_track(n_frames in 256usize..5000, overlap in 0.0f64..0.99) {
        let starts = segment_starts(n_frames, overlap).unwrap();
        let hop = ((256.0 * (1.0 - overlap)).round() as usize).max(1);
        prop_assert_eq!(starts.len(), (n_frames - 256) / hop + 1);
        prop_assert_eq!(starts[0], 0);
        prop_assert!(starts.windows(2).all(|w| w[1] - w[0] == hop));
        prop_assert!(starts.last().unwrap() + 256 <= n_frames);
        prop_assert!(starts.last().unwrap() + 256 + hop > n_frames);
    }
}

fn regression(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |i, j| rng.gen_range(-1.0..1.0) + 0.3 * ((i * (j + 1)) % 7) as f64);
    let y = DVector::from_fn(n, |i, _| {
        (0..p).map(|j| x[(i, j)] * (j as f64 - 1.5)).sum::<f64>() + rng.gen_range(-0.2..0.2)
    });
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn lasso_kkt_and_monotone_objective(seed in any::<u64>(), n in 10usize..60, p in 1usize..10, frac in 0.001f64..1.2) {
        let (x, y) = regression(seed, n, p);
        let lambda = frac * lambda_max(&x, &y).unwrap();
        let fit = lasso_fit(&x, &y, lambda).unwrap();
        prop_assert!(fit.diagnostics.converged);
        prop_assert!(fit.diagnostics.max_kkt_violation < 1e-6, "{}", fit.diagnostics.max_kkt_violation);
        prop_assert!(fit.diagnostics.objective_history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
        if frac >= 1.0 {
            prop_assert!(fit.coefficients.iter().all(|c| *c == 0.0));
        }
    }

    #[test]
    fn lda_subspace_ignores_class_names(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, d, per) = (4, 5, 15);
        let offsets: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let labels: Vec<usize> = (0..k * per).map(|i| i / per).collect();
        let x = DMatrix::from_fn(k * per, d, |i, j| offsets[labels[i]][j] + rng.gen_range(-1.0..1.0));
        let perm = [2usize, 0, 3, 1];
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l] * 10 + 7).collect();
        let projector = |w: &DMatrix<f64>| w * (w.transpose() * w).try_inverse().unwrap() * w.transpose();
        let a = lda_fit(&x, &labels).unwrap();
        let b = lda_fit(&x, &relabeled).unwrap();
        prop_assert!((projector(&a.directions) - projector(&b.directions)).amax() < 1e-8);
        for (ea, eb) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((ea - eb).abs() < 1e-9 * ea.abs().max(1.0));
        }
    }
}
