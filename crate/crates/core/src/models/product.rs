use super::{check_dim, Model};
use crate::error::{Error, Result};

/// `y = ∏ (4x_j − 2 + λ_j) / (1 + λ_j)` on `[0, 1]^D`.
///
/// Small λ_j makes x_j influential; large λ_j makes its factor almost 1.
/// With `negate` the response is `−∏ …`, which turns the lower tail of the
/// product into an upper-tail failure event.
#[derive(Clone, Debug)]
pub struct ProductModel {
    lambda: Vec<f64>,
    negate: bool,
}

impl ProductModel {
    pub fn new(lambda: Vec<f64>, negate: bool) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidParameter("product model needs D >= 1".into()));
        }
        if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "product model weights must be finite and >= 0, got {l}"
            )));
        }
        Ok(ProductModel { lambda, negate })
    }

    /// λ_j = 1 for the first four inputs and 500 for the rest.
    pub fn benchmark(dim: usize, negate: bool) -> Self {
        Self::with_effective(dim, 4, 1.0, 500.0, negate)
    }

    pub fn with_effective(dim: usize, effective: usize, active: f64, inert: f64, negate: bool) -> Self {
        let lambda = (0..dim)
            .map(|j| if j < effective { active } else { inert })
            .collect();
        ProductModel { lambda, negate }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn negated(&self) -> bool {
        self.negate
    }

    fn sign(&self) -> f64 {
        if self.negate {
            -1.0
        } else {
            1.0
        }
    }

    #[inline]
    fn factor(x: f64, lambda: f64) -> f64 {
        (4.0 * x - 2.0 + lambda) / (1.0 + lambda)
    }
}

impl Model for ProductModel {
    fn name(&self) -> &str {
        "product"
    }

    fn dimension(&self) -> usize {
        self.lambda.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.lambda.len(), x.len())?;
        let p: f64 = x
            .iter()
            .zip(&self.lambda)
            .map(|(&xi, &l)| Self::factor(xi, l))
            .product();
        Ok(self.sign() * p)
    }

    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        if let Err(e) = check_dim(self.lambda.len(), x.len()) {
            return Some(Err(e));
        }
        let d = x.len();
        let factors: Vec<f64> = x
            .iter()
            .zip(&self.lambda)
            .map(|(&xi, &l)| Self::factor(xi, l))
            .collect();
        // Prefix/suffix products keep the leave-one-out product exact when a
        // factor is zero.
        let mut suffix = vec![1.0; d + 1];
        for j in (0..d).rev() {
            suffix[j] = suffix[j + 1] * factors[j];
        }
        let sign = self.sign();
        let mut prefix = 1.0;
        let mut grad = Vec::with_capacity(d);
        for k in 0..d {
            grad.push(sign * 4.0 / (1.0 + self.lambda[k]) * prefix * suffix[k + 1]);
            prefix *= factors[k];
        }
        Some(Ok(grad))
    }
}
