//! Non-overlapping max pooling with argmax routing.

use super::{Scalar, Tensor};
use crate::error::shape_err;
use crate::{Error, Result};

/// Winning input position for every output cell of a forward call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    /// Flat row-major index into the input, one per output cell.
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

/// Max over disjoint `pool_h × pool_w` windows; rows and columns that do not
/// fill a whole window are dropped. Ties go to the first element in row-major
/// order within the window.
pub fn maxpool_forward<T: Scalar>(input: &Tensor<T>, pool_h: usize, pool_w: usize) -> Result<(Tensor<T>, PoolIndices)> {
    if pool_h == 0 || pool_w == 0 {
        return Err(Error::Config(format!("pool size {pool_h}x{pool_w} must be at least 1x1")));
    }
    let (c, h, w) = input.dims3()?;
    let (oh, ow) = (h / pool_h, w / pool_w);
    if oh == 0 || ow == 0 {
        return Err(shape_err(format!("{pool_h}x{pool_w} pool does not fit a {h}x{w} input")));
    }
    let data = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best_idx = base + i * pool_h * w + j * pool_w;
                let mut best = data[best_idx];
                for u in 0..pool_h {
                    let row = base + (i * pool_h + u) * w + j * pool_w;
                    for (v, &x) in data[row..row + pool_w].iter().enumerate() {
                        if x > best {
                            best = x;
                            best_idx = row + v;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    let output_shape = vec![c, oh, ow];
    let indices = PoolIndices { input_shape: input.shape().to_vec(), output_shape: output_shape.clone(), argmax };
    Ok((Tensor::new(&output_shape, out)?, indices))
}

/// Scatters each output gradient onto its argmax position; everything else is zero.
pub fn maxpool_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != indices.output_shape.as_slice() {
        return Err(shape_err(format!(
            "output gradient {:?} does not match pooled shape {:?}",
            grad_out.shape(),
            indices.output_shape
        )));
    }
    let mut grad_in = Tensor::zeros(&indices.input_shape);
    let dst = grad_in.data_mut();
    for (&idx, &g) in indices.argmax.iter().zip(grad_out.data()) {
        dst[idx] += g;
    }
    Ok(grad_in)
}
