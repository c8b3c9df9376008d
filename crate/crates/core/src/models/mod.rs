//! Computational models `y = M(x)` with value and gradient evaluation.

mod linear;
mod product;
pub mod truss;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use linear::LinearModel;
pub use product::ProductModel;
pub use truss::{TrussGeometry, TrussModel};

/// A deterministic response function of `dimension()` inputs.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    /// Closed-form gradient, for models that have one.
    fn gradient(&self, _x: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }
}

impl<M: Model + ?Sized> Model for Arc<M> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        (**self).gradient(x)
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        (**self).gradient(x)
    }
}

/// Response and its gradient at one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub y: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Analytic,
    CentralDifference { step: f64 },
}

/// A model paired with its failure threshold: failure is `M(x) >= threshold`.
pub struct ModelSpec {
    pub model: Box<dyn Model>,
    pub threshold: f64,
    pub gradient_mode: GradientMode,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("model", &self.model.name())
            .field("dimension", &self.model.dimension())
            .field("threshold", &self.threshold)
            .field("gradient_mode", &self.gradient_mode)
            .finish()
    }
}

impl ModelSpec {
    pub fn new(model: Box<dyn Model>, threshold: f64, gradient_mode: GradientMode) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::InvalidParameter("threshold must be finite".into()));
        }
        if let GradientMode::CentralDifference { step } = gradient_mode {
            if !(step > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "finite-difference step must be > 0, got {step}"
                )));
            }
        }
        Ok(ModelSpec {
            model,
            threshold,
            gradient_mode,
        })
    }

    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.model.dimension(), x.len())?;
        self.model.value(x)
    }

    pub fn eval(&self, x: &[f64]) -> Result<ModelEval> {
        let y = self.value(x)?;
        let grad = match self.gradient_mode {
            GradientMode::Analytic => self.model.gradient(x).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "model '{}' has no analytic gradient",
                    self.model.name()
                ))
            })??,
            GradientMode::CentralDifference { step } => gradient_fd(&*self.model, x, step)?,
        };
        if grad.len() != x.len() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "model '{}' returned an invalid gradient",
                self.model.name()
            )));
        }
        Ok(ModelEval { y, grad })
    }

    pub fn is_failure(&self, y: f64) -> bool {
        y >= self.threshold
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: "model input",
            expected,
            got,
        })
    }
}

/// Central differences with per-coordinate step `step * max(|x_j|, 1)`.
pub fn gradient_fd<M: Model + ?Sized>(model: &M, x: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    check_dim(model.dimension(), x.len())?;
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = step * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        let up = model.value(&probe)?;
        probe[j] = x[j] - h;
        let down = model.value(&probe)?;
        probe[j] = x[j];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Wraps a model and counts value and gradient calls.
pub struct CountingModel<M> {
    inner: M,
    values: AtomicUsize,
    gradients: AtomicUsize,
}

impl<M: Model> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        CountingModel {
            inner,
            values: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
        }
    }

    pub fn value_calls(&self) -> usize {
        self.values.load(Ordering::Relaxed)
    }

    pub fn gradient_calls(&self) -> usize {
        self.gradients.load(Ordering::Relaxed)
    }
}

impl<M: Model> Model for CountingModel<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x)
    }
}
