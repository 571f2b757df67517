use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{Error, Result};

pub const MAX_SWEEPS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-7;

/// Diagnostics recorded by [`lasso_fit`]. Objective values are on the
/// standardized problem, one entry per completed sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    pub max_kkt_violation: f64,
    pub n_samples: usize,
    pub n_active: usize,
}

/// A fitted Lasso model in the original (unstandardized) feature scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub diagnostics: LassoDiagnostics,
}

impl LassoModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.coefficients + DVector::from_element(x.nrows(), self.intercept)
    }
}

struct Standardized {
    z: DMatrix<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Columns with nonzero variance.
    live: Vec<usize>,
    y_mean: f64,
    yc: DVector<f64>,
}

fn standardize(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Standardized> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientInput(format!("lasso needs at least 2 samples, got {n}")));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("X has {n} rows but y has {} entries", y.len())));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("lasso inputs must be finite".into()));
    }
    let nf = n as f64;
    let mut z = x.clone();
    let mut means = vec![0.0; p];
    let mut scales = vec![0.0; p];
    let mut live = Vec::with_capacity(p);
    for j in 0..p {
        let mut col = z.column_mut(j);
        let mean = col.sum() / nf;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / nf).sqrt();
        means[j] = mean;
        if sd > 1e-12 * (1.0 + mean.abs()) {
            col.scale_mut(1.0 / sd);
            scales[j] = sd;
            live.push(j);
        } else {
            col.fill(0.0);
        }
    }
    if live.is_empty() {
        return Err(Error::InsufficientInput("every column of X is constant".into()));
    }
    let y_mean = y.sum() / nf;
    let yc = y.add_scalar(-y_mean);
    Ok(Standardized { z, means, scales, live, y_mean, yc })
}

/// Smallest λ for which the zero vector is optimal: `max_j |⟨z_j, y − ȳ⟩| / n`
/// over standardized columns.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let s = standardize(x, y)?;
    let n = x.nrows() as f64;
    Ok(s.live.iter().map(|&j| s.z.column(j).dot(&s.yc).abs() / n).fold(0.0, f64::max))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)‖y − Zβ − b‖² + λ‖β‖₁` over standardized columns `Z` by
/// cyclic coordinate descent, then maps `β` back to the original scale.
/// Constant columns get a zero coefficient.
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LassoModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let s = standardize(x, y)?;
    let (n, p) = x.shape();
    let nf = n as f64;
    let mut beta = vec![0.0; p];
    let mut resid = s.yc.clone();
    let objective = |resid: &DVector<f64>, beta: &[f64]| {
        resid.norm_squared() / (2.0 * nf) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    };

    // Zero solution for λ ≥ λ_max, up to a relative slack of 1e-12.
    let at_zero = s.live.iter().all(|&j| s.z.column(j).dot(&s.yc).abs() / nf <= lambda * (1.0 + 1e-12));
    let mut history = Vec::new();
    let mut converged = at_zero;
    if at_zero {
        history.push(objective(&resid, &beta));
    }
    for _ in 0..if at_zero { 0 } else { MAX_SWEEPS } {
        let mut max_change = 0.0f64;
        for &j in &s.live {
            let zj = s.z.column(j);
            let rho = zj.dot(&resid) / nf + beta[j];
            let updated = soft_threshold(rho, lambda);
            let delta = updated - beta[j];
            if delta != 0.0 {
                resid.axpy(-delta, &zj, 1.0);
                beta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        history.push(objective(&resid, &beta));
        if max_change < TOLERANCE {
            converged = true;
            break;
        }
    }

    let resid = &s.yc - &s.z * DVector::from_column_slice(&beta);
    let max_kkt_violation = s
        .live
        .iter()
        .map(|&j| {
            let corr = s.z.column(j).dot(&resid) / nf;
            if beta[j] != 0.0 {
                (corr - lambda * beta[j].signum()).abs()
            } else {
                (corr.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max);

    let mut coefficients = DVector::zeros(p);
    let mut intercept = s.y_mean;
    for &j in &s.live {
        let c = beta[j] / s.scales[j];
        coefficients[j] = c;
        intercept -= c * s.means[j];
    }
    let diagnostics = LassoDiagnostics {
        sweeps: history.len(),
        converged,
        objective_history: history,
        max_kkt_violation,
        n_samples: n,
        n_active: beta.iter().filter(|b| **b != 0.0).count(),
    };
    if !converged {
        log::warn!("lasso stopped after {MAX_SWEEPS} sweeps without converging");
    }
    Ok(LassoModel { coefficients, intercept, lambda, diagnostics })
}

/// How λ is chosen for a filter estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    /// `fraction · λ_max` of the specific fit.
    RelativeToMax(f64),
    Fixed(f64),
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::RelativeToMax(0.01)
    }
}

impl LambdaPolicy {
    pub fn resolve(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
        match *self {
            LambdaPolicy::RelativeToMax(f) if f >= 0.0 && f.is_finite() => Ok(f * lambda_max(x, y)?),
            LambdaPolicy::Fixed(l) if l >= 0.0 && l.is_finite() => Ok(l),
            other => Err(Error::Domain(format!("invalid lambda policy {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, j| rng.gen_range(-1.0..1.0) * (j + 1) as f64 + j as f64);
        let truth: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect();
        let y = DVector::from_fn(n, |i, _| {
            (0..p).map(|j| x[(i, j)] * truth[j]).sum::<f64>() + 3.0 + rng.gen_range(-0.1..0.1)
        });
        (x, y)
    }

    #[test]
    fn zero_solution_at_lambda_max() {
        let (x, y) = random_problem(1, 40, 6);
        let lm = lambda_max(&x, &y).unwrap();
        let fit = lasso_fit(&x, &y, lm).unwrap();
        assert!(fit.coefficients.iter().all(|c| *c == 0.0));
        assert!((fit.intercept - y.mean()).abs() < 1e-12);
        let fit = lasso_fit(&x, &y, lm * 0.9).unwrap();
        assert!(fit.coefficients.iter().any(|c| *c != 0.0));
    }

    #[test]
    fn univariate_ols() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = DVector::from_column_slice(&[2.1, 3.9, 6.2, 7.8, 10.0]);
        let fit = lasso_fit(&x, &y, 0.0).unwrap();
        let (xm, ym) = (3.0, y.mean());
        let sxy: f64 = (0..5).map(|i| (x[(i, 0)] - xm) * (y[i] - ym)).sum();
        let sxx: f64 = (0..5).map(|i| (x[(i, 0)] - xm).powi(2)).sum();
        assert!((fit.coefficients[0] - sxy / sxx).abs() < 1e-10);
        assert!((fit.intercept - (ym - sxy / sxx * xm)).abs() < 1e-10);
    }

    #[test]
    fn constant_columns_get_zero() {
        let (mut x, y) = random_problem(2, 30, 4);
        x.column_mut(1).fill(7.0);
        let fit = lasso_fit(&x, &y, 0.001).unwrap();
        assert_eq!(fit.coefficients[1], 0.0);
        x.fill(1.0);
        assert!(lasso_fit(&x, &y, 0.1).is_err());
    }

    #[test]
    fn degenerate_inputs() {
        let x = DMatrix::from_element(1, 3, 1.0);
        assert!(lasso_fit(&x, &DVector::from_element(1, 1.0), 0.1).is_err());
        let (x, y) = random_problem(3, 10, 2);
        assert!(lasso_fit(&x, &y, -1.0).is_err());
        assert!(lasso_fit(&x, &y, f64::NAN).is_err());
        assert!(lasso_fit(&x, &DVector::zeros(9), 0.1).is_err());
    }

    #[test]
    fn kkt_and_monotone_objective() {
        for seed in 0..5 {
            let (x, y) = random_problem(10 + seed, 50, 5);
            let lm = lambda_max(&x, &y).unwrap();
            let fit = lasso_fit(&x, &y, 0.05 * lm).unwrap();
            assert!(fit.diagnostics.converged);
            assert!(fit.diagnostics.max_kkt_violation < 1e-6, "{}", fit.diagnostics.max_kkt_violation);
            for w in fit.diagnostics.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-15 * w[0].abs());
            }
        }
    }

    #[test]
    fn policy_resolution() {
        let (x, y) = random_problem(4, 20, 3);
        let lm = lambda_max(&x, &y).unwrap();
        assert!((LambdaPolicy::default().resolve(&x, &y).unwrap() - 0.01 * lm).abs() < 1e-15);
        assert_eq!(LambdaPolicy::Fixed(0.3).resolve(&x, &y).unwrap(), 0.3);
        assert!(LambdaPolicy::Fixed(-0.3).resolve(&x, &y).is_err());
    }
}
