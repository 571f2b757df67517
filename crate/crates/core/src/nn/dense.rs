use super::scalar::matmul;
use super::{Scalar, Tensor};
use crate::error::shape_err;
use crate::Result;

fn check<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let [m, n] = *weights.shape() else {
        return Err(shape_err(format!("dense weights must be rank 2, got {:?}", weights.shape())));
    };
    if input.len() != n {
        return Err(shape_err(format!("dense layer expects {n} inputs, got {}", input.len())));
    }
    Ok((m, n))
}

/// `out = W · in + b`, with `in` flattened.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, biases: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = check(input, weights)?;
    if biases.len() != m {
        return Err(shape_err(format!("{} biases for {m} outputs", biases.len())));
    }
    let mut out = biases.data().to_vec();
    matmul(m, n, 1, weights.data(), false, input.data(), false, &mut out, true);
    Tensor::new(&[m], out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    /// Same shape as the forward input.
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub biases: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (m, n) = check(input, weights)?;
    if grad_out.len() != m {
        return Err(shape_err(format!("{} output gradients for {m} outputs", grad_out.len())));
    }
    // dW = g ⊗ x
    let mut dw = vec![T::zero(); m * n];
    matmul(m, 1, n, grad_out.data(), false, input.data(), false, &mut dw, false);
    let mut dx = vec![T::zero(); n];
    matmul(n, m, 1, weights.data(), true, grad_out.data(), false, &mut dx, false);
    Ok(DenseGrads {
        input: Tensor::new(input.shape(), dx)?,
        weights: Tensor::new(weights.shape(), dw)?,
        biases: Tensor::new(&[m], grad_out.data().to_vec())?,
    })
}
