//! Zero-mean GP regression with constant Gaussian noise, fitted by maximum
//! marginal likelihood.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{median_pairwise_distance, SeArdKernel};
use super::optim::{minimize, LbfgsOptions, SigmoidBounds};
use super::{check_training, restart_scales, Prediction, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, solve_lower};

/// Log-space hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub log_signal_variance: f64,
    pub log_lengthscales: Vec<f64>,
    pub log_noise_variance: f64,
}

impl GpParams {
    fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.log_signal_variance];
        v.extend(&self.log_lengthscales);
        v.push(self.log_noise_variance);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        let d = v.len() - 2;
        GpParams {
            log_signal_variance: v[0],
            log_lengthscales: v[1..=d].to_vec(),
            log_noise_variance: v[d + 1],
        }
    }
}

#[derive(Clone, Debug)]
pub struct GpConfig {
    pub restarts: usize,
    pub standardize: bool,
    pub optimizer: LbfgsOptions,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            restarts: 5,
            standardize: true,
            optimizer: LbfgsOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GpModel {
    kernel: SeArdKernel,
    noise_variance: f64,
    scaler: Standardizer,
    x: DMatrix<f64>,
    y: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn factorize(
    kernel: &SeArdKernel,
    noise: f64,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>, DVector<f64>)> {
    let k = kernel.gram(x);
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += noise;
    }
    let chol = cholesky(a, "K_f + σ_n² I")?;
    let alpha = chol.solve(y);
    Ok((k, chol, alpha))
}

fn log_marginal_of(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    -0.5 * y.dot(alpha) - 0.5 * log_det(chol) - 0.5 * n * (2.0 * PI).ln()
}

/// Log marginal likelihood and its gradient in `[ln σ², ln ℓ.., ln σ_n²]`.
pub fn log_marginal_and_grad(x: &DMatrix<f64>, y: &DVector<f64>, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = GpParams::from_vec(theta);
    let kernel = SeArdKernel::from_log(p.log_signal_variance, &p.log_lengthscales);
    let noise = p.log_noise_variance.exp();
    let (k, chol, alpha) = factorize(&kernel, noise, x, y)?;
    let value = log_marginal_of(&chol, y, &alpha);
    let mut q = alpha.clone() * alpha.transpose() - chol.inverse();
    q *= 0.5;
    let mut grad = kernel.trace_gradients(x, &k, &q);
    grad.push(noise * q.trace());
    Ok((value, grad))
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on `(x, y)`.
    pub fn new(
        x: &DMatrix<f64>,
        y: &[f64],
        kernel: SeArdKernel,
        noise_variance: f64,
        standardize: bool,
    ) -> Result<Self> {
        check_training(x, y, 1)?;
        if kernel.dim() != x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "GP kernel lengthscales",
                expected: x.ncols(),
                got: kernel.dim(),
            });
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise variance must be >= 0, got {noise_variance}")));
        }
        let scaler = if standardize {
            Standardizer::fit(x, y)
        } else {
            Standardizer::identity(x.ncols())
        };
        let xs = scaler.inputs(x);
        let ys = scaler.outputs(y);
        let (_, chol, alpha) = factorize(&kernel, noise_variance, &xs, &ys)?;
        Ok(GpModel {
            kernel,
            noise_variance,
            scaler,
            x: xs,
            y: ys,
            chol,
            alpha,
        })
    }

    /// Maximum-likelihood fit with multi-start L-BFGS.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], cfg: &GpConfig) -> Result<Self> {
        check_training(x, y, 2)?;
        let scaler = if cfg.standardize {
            Standardizer::fit(x, y)
        } else {
            Standardizer::identity(x.ncols())
        };
        let xs = scaler.inputs(x);
        let ys = scaler.outputs(y);
        let d = x.ncols();
        let var_y = ys.iter().map(|v| v * v).sum::<f64>() / ys.len() as f64;
        let var_y = if var_y > 0.0 { var_y } else { 1.0 };
        let med = median_pairwise_distance(&xs);

        let mut lower = vec![-10.0];
        let mut upper = vec![10.0];
        lower.extend(std::iter::repeat(1e-3f64.ln()).take(d));
        upper.extend(std::iter::repeat(1e3f64.ln()).take(d));
        lower.push(-20.0);
        upper.push(5.0);
        let bounds = SigmoidBounds::new(lower, upper)?;

        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut last_err = None;
        for scale in restart_scales(cfg.restarts.max(1)) {
            let init = GpParams {
                log_signal_variance: var_y.ln(),
                log_lengthscales: vec![(scale * med).ln(); d],
                log_noise_variance: (var_y / 100.0).ln(),
            };
            let z0 = bounds.to_free(&init.to_vec());
            let objective = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
                let theta = bounds.to_bounded(z);
                let (v, g) = log_marginal_and_grad(&xs, &ys, &theta)?;
                let gz = bounds.pull_back(z, &g);
                Ok((-v, gz.into_iter().map(|g| -g).collect()))
            };
            match minimize(objective, &z0, &cfg.optimizer) {
                Ok(r) => {
                    if best.as_ref().is_none_or(|(f, _)| r.f < *f) {
                        best = Some((r.f, bounds.to_bounded(&r.x)));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        let (_, theta) = best.ok_or_else(|| {
            Error::Optimizer(format!(
                "every GP restart failed; last error: {}",
                last_err.map(|e| e.to_string()).unwrap_or_default()
            ))
        })?;
        let p = GpParams::from_vec(&theta);
        let kernel = SeArdKernel::from_log(p.log_signal_variance, &p.log_lengthscales);
        let noise_variance = p.log_noise_variance.exp();
        let (_, chol, alpha) = factorize(&kernel, noise_variance, &xs, &ys)?;
        Ok(GpModel {
            kernel,
            noise_variance,
            scaler,
            x: xs,
            y: ys,
            chol,
            alpha,
        })
    }

    pub fn kernel(&self) -> &SeArdKernel {
        &self.kernel
    }

    /// Noise variance in the working (possibly standardized) output units.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn scaler(&self) -> &Standardizer {
        &self.scaler
    }

    /// Log marginal likelihood of the working (possibly standardized) data.
    pub fn log_marginal(&self) -> f64 {
        log_marginal_of(&self.chol, &self.y, &self.alpha)
    }

    pub fn predict(&self, p: &[f64]) -> Prediction {
        let ps = self.scaler.point(p);
        let ks = self.kernel.cross(&self.x, &ps);
        let mean = ks.dot(&self.alpha);
        let v = solve_lower(&self.chol, &ks);
        let latent = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        Prediction {
            mean: self.scaler.mean_back(mean),
            variance: self.scaler.variance_back(latent),
            latent_variance: self.scaler.variance_back(latent),
            noise_variance: self.scaler.variance_back(self.noise_variance),
        }
    }
}
