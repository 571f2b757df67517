use rand::Rng;

use super::{Scalar, Tensor};
use crate::error::shape_err;
use crate::{Error, Result};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Passes `grad_out` where the forward input was positive.
///
/// `activation` may be either the ReLU input or its output: both are positive at exactly the same positions.
pub fn relu_backward<T: Scalar>(activation: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    activation.ensure_same_shape(grad_out)?;
    let data = activation
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape(), data)
}

/// Max-shifted softmax over a flat vector.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.is_empty() {
        return Err(shape_err("softmax of an empty vector"));
    }
    let max = logits.data().iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::new(logits.shape(), exps.into_iter().map(|e| e / total).collect())
}

/// `-ln p[label]`.
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<T> {
    let p =
        *probs.data().get(label).ok_or_else(|| Error::Index(format!("label {label} with {} classes", probs.len())))?;
    Ok(-p.max(T::min_positive_value()).ln())
}

/// Gradient of `cross_entropy_loss(softmax(z), label)` with respect to the logits `z`: `p − onehot(label)`.
pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<Tensor<T>> {
    if label >= probs.len() {
        return Err(Error::Index(format!("label {label} with {} classes", probs.len())));
    }
    let mut grad = probs.clone();
    grad.data_mut()[label] -= T::one();
    Ok(grad)
}

/// Inverted dropout.
///
/// In training mode each unit is zeroed with probability `rate` and survivors
/// are scaled by `1 / (1 − rate)`; the per-unit scale is returned for the
/// backward pass. Outside training, or with `rate == 0`, the input is returned
/// unchanged and no mask is drawn.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} must be in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask = Tensor::from_fn(input.shape(), |_| if rng.gen::<f64>() < rate { T::zero() } else { keep });
    let out = input.data().iter().zip(mask.data()).map(|(&x, &m)| x * m).collect();
    Ok((Tensor::new(input.shape(), out)?, Some(mask)))
}

pub fn dropout_backward<T: Scalar>(mask: Option<&Tensor<T>>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(mask) => {
            mask.ensure_same_shape(grad_out)?;
            let data = grad_out.data().iter().zip(mask.data()).map(|(&g, &m)| g * m).collect();
            Tensor::new(grad_out.shape(), data)
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn relu_values_and_gradient() {
        let x = t(&[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &t(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
        let neg = t(&[-3.0, -0.1]);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        assert!(relu_backward(&neg, &t(&[1.0, 1.0])).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_reference_values() {
        let p = softmax(&t(&[0.0, 3f64.ln()])).unwrap();
        assert!((p.data()[0] - 0.25).abs() < 1e-15);
        assert!((p.data()[1] - 0.75).abs() < 1e-15);
        let u = softmax(&t(&[2.0; 10])).unwrap();
        assert!(u.data().iter().all(|&v| (v - 0.1).abs() < 1e-15));
        let shifted = softmax(&t(&[1000.0, 1000.0 + 3f64.ln()])).unwrap();
        assert!((shifted.data()[1] - 0.75).abs() < 1e-12);
        assert!(softmax(&Tensor::<f64>::zeros(&[0])).is_err());
    }

    #[test]
    fn cross_entropy_reference_values() {
        assert_eq!(cross_entropy_loss(&t(&[0.0, 1.0]), 1).unwrap(), 0.0);
        let uniform = Tensor::<f64>::filled(&[10], 0.1);
        assert!((cross_entropy_loss(&uniform, 3).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!(matches!(cross_entropy_loss(&uniform, 10), Err(Error::Index(_))));
        assert!(matches!(softmax_cross_entropy_backward(&uniform, 11), Err(Error::Index(_))));
        let g = softmax_cross_entropy_backward(&t(&[0.2, 0.8]), 1).unwrap();
        assert!((g.data()[0] - 0.2).abs() < 1e-15 && (g.data()[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = t(&[1.0, 2.0, 3.0]);
        for training in [false, true] {
            let (y, mask) = dropout(&x, 0.0, training, &mut rng).unwrap();
            assert_eq!(y, x);
            assert!(mask.is_none());
        }
        let (y, mask) = dropout(&x, 0.9, false, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::<f64>::filled(&[8], 1.5);
        let trials = 100_000;
        let mut sums = [0.0; 8];
        for _ in 0..trials {
            let (y, _) = dropout(&x, 0.5, true, &mut rng).unwrap();
            for (s, v) in sums.iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        for s in sums {
            assert!((s / trials as f64 - 1.5).abs() < 0.02 * 1.5);
        }
    }

    #[test]
    fn dropout_backward_uses_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::filled(&[64], 1.0);
        let (y, mask) = dropout(&x, 0.25, true, &mut rng).unwrap();
        let g = dropout_backward(mask.as_ref(), &Tensor::filled(&[64], 1.0)).unwrap();
        assert_eq!(g, y);
    }
}
