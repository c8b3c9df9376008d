use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::JITTER;

/// Squared-exponential kernel with one lengthscale per input dimension:
/// `k(a, b) = σ² exp(−½ Σ_k (a_k − b_k)² / ℓ_k²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeArdKernel {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
}

impl SeArdKernel {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(signal_variance) || lengthscales.is_empty() || !lengthscales.iter().all(|&l| ok(l)) {
            return Err(Error::InvalidParameter(format!(
                "SE-ARD kernel needs positive parameters, got σ²={signal_variance}, ℓ={lengthscales:?}"
            )));
        }
        Ok(SeArdKernel {
            signal_variance,
            lengthscales,
        })
    }

    /// Builds from `[ln σ², ln ℓ_1, …]` without validation.
    pub(crate) fn from_log(log_var: f64, log_ls: &[f64]) -> Self {
        SeArdKernel {
            signal_variance: log_var.exp(),
            lengthscales: log_ls.iter().map(|v| v.exp()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for k in 0..self.lengthscales.len() {
            let d = (a[k] - b[k]) / self.lengthscales[k];
            r2 += d * d;
        }
        self.signal_variance * (-0.5 * r2).exp()
    }

    /// Gram matrix over the rows of `x`, plus `JITTER·σ²` on the diagonal.
    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let d = self.dim();
        let inv: Vec<f64> = self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            k[(j, j)] = self.signal_variance * (1.0 + JITTER);
            for i in (j + 1)..n {
                let mut r2 = 0.0;
                for c in 0..d {
                    let t = x[(i, c)] - x[(j, c)];
                    r2 += t * t * inv[c];
                }
                let v = self.signal_variance * (-0.5 * r2).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// `k(x_i, p)` for each row `x_i`.
    pub fn cross(&self, x: &DMatrix<f64>, p: &[f64]) -> DVector<f64> {
        let n = x.nrows();
        let d = self.dim();
        DVector::from_fn(n, |i, _| {
            let mut r2 = 0.0;
            for c in 0..d {
                let t = (x[(i, c)] - p[c]) / self.lengthscales[c];
                r2 += t * t;
            }
            self.signal_variance * (-0.5 * r2).exp()
        })
    }

    /// `tr(∂K/∂θ · M)` for θ = (ln σ², ln ℓ_1, …), given the jittered Gram
    /// matrix `k` built by [`Self::gram`] and a symmetric weight `m`.
    pub fn trace_gradients(&self, x: &DMatrix<f64>, k: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
        let n = x.nrows();
        let d = self.dim();
        let mut out = vec![0.0; d + 1];
        // ∂K/∂ln σ² = K (the jitter scales with σ² too).
        out[0] = k.iter().zip(m.iter()).map(|(a, b)| a * b).sum();
        let inv: Vec<f64> = self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        for j in 0..n {
            for i in (j + 1)..n {
                let w = 2.0 * k[(i, j)] * m[(i, j)];
                if w == 0.0 {
                    continue;
                }
                for c in 0..d {
                    let t = x[(i, c)] - x[(j, c)];
                    out[c + 1] += w * t * t * inv[c];
                }
            }
        }
        out
    }
}

/// Median Euclidean distance over all pairs of rows (1 if fewer than two).
pub fn median_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut r2 = 0.0;
            for c in 0..x.ncols() {
                r2 += (x[(i, c)] - x[(j, c)]).powi(2);
            }
            d.push(r2.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}
