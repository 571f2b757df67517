use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub const N_COMPONENTS: usize = 3;

/// A fitted multi-class LDA projection.
#[derive(Debug, Clone)]
pub struct LdaProjection {
    /// `d × k` directions, `k = min(3, d, classes − 1)`, scaled so `wᵀ(S_w + εI)w = 1`.
    pub directions: DMatrix<f64>,
    /// Descending generalized eigenvalues matching `directions`' columns.
    pub eigenvalues: Vec<f64>,
    /// Distinct labels in ascending order.
    pub classes: Vec<usize>,
    pub class_means: Vec<DVector<f64>>,
    /// Ridge added to the within-class scatter (0 when it was nonsingular).
    pub regularization: f64,
    pub training_projection: DMatrix<f64>,
}

impl LdaProjection {
    pub fn n_components(&self) -> usize {
        self.directions.ncols()
    }

    pub fn project(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.directions.nrows() {
            return Err(Error::Shape(format!(
                "LDA was fit on {} features, got {}",
                self.directions.nrows(),
                features.ncols()
            )));
        }
        Ok(features * &self.directions)
    }
}

fn class_index(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let idx = labels.iter().map(|l| classes.binary_search(l).unwrap()).collect();
    (classes, idx)
}

fn check_inputs(features: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", features.nrows(), labels.len())));
    }
    if features.ncols() == 0 {
        return Err(Error::Shape("LDA needs at least one feature".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("LDA features must be finite".into()));
    }
    Ok(())
}

/// Within-class and between-class scatter, both normalized by `n`.
pub fn scatter_matrices(features: &DMatrix<f64>, labels: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_inputs(features, labels)?;
    let (classes, idx) = class_index(labels);
    let (means, counts) = class_means(features, &idx, classes.len());
    let centred = within_centred(features, &idx, &means);
    let n = features.nrows() as f64;
    let s_w = centred.transpose() * &centred / n;
    let grand = features.row_mean().transpose();
    let d = features.ncols();
    let mut s_b = DMatrix::zeros(d, d);
    for (m, &c) in means.iter().zip(&counts) {
        let diff = m - &grand;
        s_b += &diff * diff.transpose() * (c as f64 / n);
    }
    Ok((s_w, s_b))
}

fn class_means(features: &DMatrix<f64>, idx: &[usize], k: usize) -> (Vec<DVector<f64>>, Vec<usize>) {
    let d = features.ncols();
    let mut sums = vec![DVector::zeros(d); k];
    let mut counts = vec![0usize; k];
    for (r, &c) in idx.iter().enumerate() {
        sums[c] += features.row(r).transpose();
        counts[c] += 1;
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        *s /= c as f64;
    }
    (sums, counts)
}

fn within_centred(features: &DMatrix<f64>, idx: &[usize], means: &[DVector<f64>]) -> DMatrix<f64> {
    let mut centred = features.clone();
    for (r, &c) in idx.iter().enumerate() {
        let mut row = centred.row_mut(r);
        row -= means[c].transpose();
    }
    centred
}

fn ridge_for(s_w_trace: f64, s_b_trace: f64, d: usize) -> Result<f64> {
    let base = if s_w_trace > 0.0 { s_w_trace } else { s_b_trace };
    if base <= 0.0 {
        return Err(Error::InsufficientInput("all samples are identical; LDA is undefined".into()));
    }
    Ok(1e-6 * base / d as f64)
}

/// Solves `S_b w = λ S_w w` for the `k` largest eigenvalues. `S_w` must be
/// positive definite. Returns eigenvalues (descending) and `S_w`-normalized
/// eigenvectors as columns.
pub fn generalized_eigen(s_b: &DMatrix<f64>, s_w: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = s_w.nrows();
    if s_w.shape() != (d, d) || s_b.shape() != (d, d) {
        return Err(Error::Shape("scatter matrices must be square and the same size".into()));
    }
    let chol =
        s_w.clone().cholesky().ok_or_else(|| Error::Domain("within-class scatter is not positive definite".into()))?;
    let l = chol.l();
    // M = L⁻¹ S_b L⁻ᵀ
    let left = l.solve_lower_triangular(s_b).ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    let m =
        l.solve_lower_triangular(&left.transpose()).ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let k = k.min(d);
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut v = DMatrix::zeros(d, k);
    for (col, &i) in order[..k].iter().enumerate() {
        v.set_column(col, &eig.eigenvectors.column(i));
    }
    let w = l.transpose().solve_upper_triangular(&v).ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    Ok((values, w))
}

/// Normalized residual `‖S_b w − λ S_w w‖ / ((‖S_b‖ + |λ|‖S_w‖)‖w‖)`, Frobenius norms.
pub fn eigen_residual(s_b: &DMatrix<f64>, s_w: &DMatrix<f64>, lambda: f64, w: &DVector<f64>) -> f64 {
    let r = s_b * w - s_w * w * lambda;
    let scale = (s_b.norm() + lambda.abs() * s_w.norm()) * w.norm();
    if scale == 0.0 {
        r.norm()
    } else {
        r.norm() / scale
    }
}

/// Fits LDA directions on `features` (`n × d`) with integer class labels.
///
/// A singular within-class scatter gets a ridge of `1e-6 · trace / d`. When
/// `d` exceeds the sample count the problem is solved in the `n`-dimensional
/// dual space so the `d × d` matrices are never formed.
pub fn lda_fit(features: &DMatrix<f64>, labels: &[usize]) -> Result<LdaProjection> {
    check_inputs(features, labels)?;
    let (classes, idx) = class_index(labels);
    if classes.len() < 2 {
        return Err(Error::InsufficientInput("LDA needs at least two classes".into()));
    }
    let (n, d) = features.shape();
    if n <= classes.len() {
        return Err(Error::InsufficientInput(format!("LDA needs more samples ({n}) than classes ({})", classes.len())));
    }
    let k = N_COMPONENTS.min(d).min(classes.len() - 1);
    let (means, counts) = class_means(features, &idx, classes.len());

    let (eigenvalues, directions, regularization) = if d > n {
        dual_fit(features, &idx, &means, &counts, k)?
    } else {
        let (s_w, s_b) = scatter_matrices(features, labels)?;
        match generalized_eigen(&s_b, &s_w, k) {
            Ok((vals, w)) if well_conditioned(&s_w) => (vals, w, 0.0),
            _ => {
                let eps = ridge_for(s_w.trace(), s_b.trace(), d)?;
                let reg = &s_w + DMatrix::identity(d, d) * eps;
                let (vals, w) = generalized_eigen(&s_b, &reg, k)?;
                (vals, w, eps)
            }
        }
    };
    let training_projection = features * &directions;
    Ok(LdaProjection { directions, eigenvalues, classes, class_means: means, regularization, training_projection })
}

fn well_conditioned(s_w: &DMatrix<f64>) -> bool {
    let eig = s_w.clone().symmetric_eigenvalues();
    let max = eig.max();
    max > 0.0 && eig.min() > 1e-12 * max
}

/// Dual solution: with `H` the within-centred data over `√n` (`S_w = HᵀH`) and
/// `B` the weighted class-mean offsets (`S_b = BᵀB`), `Y = (εI + HᵀH)⁻¹Bᵀ` is
/// obtained through the `n × n` Woodbury identity, and eigenvectors `u` of
/// `K = BY` give directions `w = Yu / √λ`.
fn dual_fit(
    features: &DMatrix<f64>,
    idx: &[usize],
    means: &[DVector<f64>],
    counts: &[usize],
    k: usize,
) -> Result<(Vec<f64>, DMatrix<f64>, f64)> {
    let (n, d) = features.shape();
    let nf = n as f64;
    let h = within_centred(features, idx, means) / nf.sqrt();
    let grand = features.row_mean().transpose();
    let mut b = DMatrix::zeros(means.len(), d);
    for (c, (m, &cnt)) in means.iter().zip(counts).enumerate() {
        b.set_row(c, &((m - &grand) * (cnt as f64 / nf).sqrt()).transpose());
    }
    let s_w_trace = h.norm_squared();
    let s_b_trace = b.norm_squared();
    let eps = ridge_for(s_w_trace, s_b_trace, d)?;

    let bt = b.transpose();
    let hbt = &h * &bt;
    let gram = &h * h.transpose() + DMatrix::identity(n, n) * eps;
    let chol =
        gram.cholesky().ok_or_else(|| Error::Domain("regularized Gram matrix is not positive definite".into()))?;
    let y = (&bt - h.transpose() * chol.solve(&hbt)) / eps;
    let kmat = &b * &y;
    let kmat = (&kmat + kmat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(kmat);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    let mut values = Vec::with_capacity(k);
    let mut w = DMatrix::zeros(d, k);
    for (col, &i) in order[..k].iter().enumerate() {
        let lambda = eig.eigenvalues[i].max(0.0);
        values.push(lambda);
        if lambda > 0.0 {
            w.set_column(col, &(&y * eig.eigenvectors.column(i) / lambda.sqrt()));
        }
    }
    Ok((values, w, eps))
}

/// Ratio of between-class to within-class variance along each column of
/// `points`, summed over columns.
pub fn separation_ratio(points: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let (s_w, s_b) = scatter_matrices(points, labels)?;
    let (w, b) = (s_w.trace(), s_b.trace());
    if w == 0.0 {
        return Ok(if b == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(b / w)
}

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// classes score 0.
pub fn silhouette_score(points: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    check_inputs(points, labels)?;
    let (classes, idx) = class_index(labels);
    if classes.len() < 2 {
        return Err(Error::InsufficientInput("silhouette needs at least two classes".into()));
    }
    let n = points.nrows();
    let counts = idx.iter().fold(vec![0usize; classes.len()], |mut acc, &c| {
        acc[c] += 1;
        acc
    });
    let rows: Vec<_> = (0..n).map(|i| points.row(i).into_owned()).collect();
    use rayon::prelude::*;
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = idx[i];
            if counts[own] < 2 {
                return 0.0;
            }
            let mut sums = vec![0.0; classes.len()];
            for j in 0..n {
                if j != i {
                    sums[idx[j]] += (&rows[i] - &rows[j]).norm();
                }
            }
            let a = sums[own] / (counts[own] - 1) as f64;
            let b = (0..classes.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .sum();
    Ok(total / n as f64)
}
