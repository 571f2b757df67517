//! Valid (unpadded), stride-1 2-D cross-correlation, lowered to GEMM via im2col.

use super::scalar::matmul;
use super::{Scalar, Tensor};
use crate::error::shape_err;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvGeometry {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
}

impl ConvGeometry {
    fn new<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<Self> {
        let (c_in, h, w) = input.dims3()?;
        let [c_out, wc, kh, kw] = *weights.shape() else {
            return Err(shape_err(format!("conv weights must be rank 4, got {:?}", weights.shape())));
        };
        if wc != c_in {
            return Err(shape_err(format!("kernel expects {wc} input channels, input has {c_in}")));
        }
        if kh == 0 || kw == 0 || kh > h || kw > w {
            return Err(shape_err(format!("{kh}x{kw} kernel does not fit a {h}x{w} input")));
        }
        Ok(Self { c_in, h, w, c_out, kh, kw })
    }

    fn out_h(&self) -> usize {
        self.h - self.kh + 1
    }

    fn out_w(&self) -> usize {
        self.w - self.kw + 1
    }

    /// Rows of the im2col matrix: one per (channel, kernel row, kernel col).
    fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn n_positions(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

fn im2col<T: Scalar>(g: &ConvGeometry, input: &[T]) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut col = vec![T::zero(); g.patch_len() * g.n_positions()];
    let mut rows = col.chunks_exact_mut(oh * ow);
    for c in 0..g.c_in {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = rows.next().unwrap();
                for i in 0..oh {
                    let src = &plane[(i + u) * g.w + v..(i + u) * g.w + v + ow];
                    row[i * ow..(i + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(g: &ConvGeometry, col: &[T]) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![T::zero(); g.c_in * g.h * g.w];
    let mut rows = col.chunks_exact(oh * ow);
    for c in 0..g.c_in {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = rows.next().unwrap();
                for i in 0..oh {
                    let dst = &mut plane[(i + u) * g.w + v..(i + u) * g.w + v + ow];
                    for (d, &s) in dst.iter_mut().zip(&row[i * ow..(i + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// `out[o,i,j] = b[o] + Σ_{c,u,v} in[c, i+u, j+v] · w[o,c,u,v]`.
///
/// `input` is `C_in × H × W`, `weights` is `C_out × C_in × kH × kW`, `biases` is `C_out`.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, biases: &Tensor<T>) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input, weights)?;
    if biases.len() != g.c_out {
        return Err(shape_err(format!("{} biases for {} output channels", biases.len(), g.c_out)));
    }
    let n = g.n_positions();
    let col = im2col(&g, input.data());
    let mut out = vec![T::zero(); g.c_out * n];
    for (plane, &b) in out.chunks_exact_mut(n).zip(biases.data()) {
        plane.fill(b);
    }
    matmul(g.c_out, g.patch_len(), n, weights.data(), false, &col, false, &mut out, true);
    Tensor::new(&[g.c_out, g.out_h(), g.out_w()], out)
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub biases: Tensor<T>,
}

/// Gradients of a forward call with respect to its input, weights and biases.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let (g, col) = prepare_backward(input, weights, grad_out)?;
    let (weight_grads, bias_grads) = param_grads(&g, &col, weights, grad_out)?;
    let n = g.n_positions();
    let mut grad_col = vec![T::zero(); g.patch_len() * n];
    matmul(g.patch_len(), g.c_out, n, weights.data(), true, grad_out.data(), false, &mut grad_col, false);
    Ok(Conv2dGrads {
        input: Tensor::new(input.shape(), col2im(&g, &grad_col))?,
        weights: weight_grads,
        biases: bias_grads,
    })
}

/// Weight and bias gradients only; used for a first layer whose input needs no gradient.
pub fn conv2d_param_grads<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (g, col) = prepare_backward(input, weights, grad_out)?;
    param_grads(&g, &col, weights, grad_out)
}

fn prepare_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(ConvGeometry, Vec<T>)> {
    let g = ConvGeometry::new(input, weights)?;
    if grad_out.shape() != [g.c_out, g.out_h(), g.out_w()] {
        return Err(shape_err(format!(
            "output gradient {:?} does not match forward output {:?}",
            grad_out.shape(),
            [g.c_out, g.out_h(), g.out_w()]
        )));
    }
    let col = im2col(&g, input.data());
    Ok((g, col))
}

fn param_grads<T: Scalar>(
    g: &ConvGeometry,
    col: &[T],
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let n = g.n_positions();
    let mut dw = vec![T::zero(); g.c_out * g.patch_len()];
    matmul(g.c_out, n, g.patch_len(), grad_out.data(), false, col, true, &mut dw, false);
    let db = grad_out.data().chunks_exact(n).map(|plane| plane.iter().copied().sum()).collect();
    Ok((Tensor::new(weights.shape(), dw)?, Tensor::new(&[g.c_out], db)?))
}
