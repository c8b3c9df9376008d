//! Gaussian-process regression in the reduced feature space: a standard
//! homoscedastic GP and the marginalized variational heteroscedastic GP.

pub mod hetero;
pub mod homoscedastic;
pub mod kernel;
pub mod optim;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hetero::{HgpBounds, HgpConfig, HgpFit, HgpModel, HgpParams};
pub use homoscedastic::{GpConfig, GpModel, GpParams};
pub use kernel::SeArdKernel;
pub use optim::{LbfgsOptions, LbfgsResult, SigmoidBounds};

/// Predictive moments in the units of the training outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    /// Posterior variance of the latent mean function (γ*² for the hGP).
    pub latent_variance: f64,
    /// Expected observation-noise variance at the point.
    pub noise_variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Affine maps to zero-mean, unit-variance inputs (per column) and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    let s = var.sqrt();
    (m, if s > 0.0 && s.is_finite() { s } else { 1.0 })
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            x_mean: vec![0.0; dim],
            x_scale: vec![1.0; dim],
            y_mean: 0.0,
            y_scale: 1.0,
        }
    }

    pub fn fit(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let (x_mean, x_scale) = (0..x.ncols()).map(|c| mean_std(x.column(c).iter().copied())).unzip();
        let (y_mean, y_scale) = mean_std(y.iter().copied());
        Standardizer {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, c| (x[(i, c)] - self.x_mean[c]) / self.x_scale[c])
    }

    pub fn point(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.x_mean.iter().zip(&self.x_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn outputs(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(y.len(), y.iter().map(|v| (v - self.y_mean) / self.y_scale))
    }

    pub fn mean_back(&self, m: f64) -> f64 {
        m * self.y_scale + self.y_mean
    }

    pub fn variance_back(&self, v: f64) -> f64 {
        v * self.y_scale * self.y_scale
    }
}

pub(crate) fn check_training(x: &DMatrix<f64>, y: &[f64], min_n: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "GP training outputs",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() < min_n {
        return Err(Error::InvalidInput(format!(
            "GP needs at least {min_n} training points, got {}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidInput("GP inputs have zero columns".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("GP training data contain non-finite values".into()));
    }
    Ok(())
}

/// Lengthscale multipliers for the multi-start: log-spaced over [0.1, 10].
pub(crate) fn restart_scales(restarts: usize) -> Vec<f64> {
    match restarts {
        0 => vec![],
        1 => vec![1.0],
        r => (0..r)
            .map(|s| 10f64.powf(-1.0 + 2.0 * s as f64 / (r - 1) as f64))
            .collect(),
    }
}
