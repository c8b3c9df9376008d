use super::{check_dim, Model};
use crate::error::Result;

/// `y = β₀√D − Σ x_j`: a linear benchmark whose exact one-dimensional
/// feature is `Σ x_j`. With standard-normal inputs and threshold 0 the
/// failure probability of `y <= 0` is Φ(−β₀) for any D. The negated form
/// puts that event on the upper side, `−y >= 0`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    beta0: f64,
    dim: usize,
    negate: bool,
}

impl LinearModel {
    pub fn new(beta0: f64, dim: usize) -> Self {
        LinearModel { beta0, dim, negate: false }
    }

    pub fn negated(beta0: f64, dim: usize) -> Self {
        LinearModel { beta0, dim, negate: true }
    }

    fn sign(&self) -> f64 {
        if self.negate {
            -1.0
        } else {
            1.0
        }
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }
}

impl Model for LinearModel {
    fn name(&self) -> &str {
        "linear"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.sign() * (self.beta0 * (self.dim as f64).sqrt() - x.iter().sum::<f64>()))
    }

    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(check_dim(self.dim, x.len()).map(|_| vec![-self.sign(); self.dim]))
    }
}
