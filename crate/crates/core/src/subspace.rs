//! Active subspace from sampled gradients, and the adaptive choice of the
//! reduced dimension.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{HgpConfig, HgpFit, HgpModel, HgpParams};
use crate::linalg::sym_eigen_sorted;

/// `Ĉ = (1/n) Σ ∇y_i ∇y_iᵀ` from gradients stored as rows.
pub fn estimate_c(grads: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = grads.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("gradient set is empty".into()));
    }
    if grads.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("gradient set contains non-finite entries".into()));
    }
    let mut c = grads.tr_mul(grads);
    c /= n as f64;
    // Exact symmetry regardless of summation order.
    let c = (&c + c.transpose()) * 0.5;
    Ok(c)
}

/// Eigenpairs of Ĉ with a retained dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceProjection {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, same order as `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub d_r: usize,
}

/// Symmetric eigendecomposition with descending eigenvalues and each
/// eigenvector's largest-magnitude component made positive.
pub fn eigendecompose(c: &DMatrix<f64>) -> Result<SubspaceProjection> {
    if !c.is_square() || c.nrows() == 0 {
        return Err(Error::InvalidInput(format!("C must be square and non-empty, got {:?}", c.shape())));
    }
    let scale = c.norm().max(f64::MIN_POSITIVE);
    if (c - c.transpose()).norm() > 1e-8 * scale {
        return Err(Error::InvalidInput("C is not symmetric".into()));
    }
    let (eigenvalues, eigenvectors) = sym_eigen_sorted(c);
    Ok(SubspaceProjection {
        d_r: eigenvalues.len(),
        eigenvalues,
        eigenvectors,
    })
}

impl SubspaceProjection {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn with_dimension(&self, d_r: usize) -> Result<Self> {
        if d_r == 0 || d_r > self.dim() {
            return Err(Error::InvalidParameter(format!(
                "reduced dimension must be in 1..={}, got {d_r}",
                self.dim()
            )));
        }
        Ok(SubspaceProjection {
            d_r,
            ..self.clone()
        })
    }

    /// `W_r`: the first `d_r` eigenvectors.
    pub fn w_r(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.d_r).into_owned()
    }

    /// `λ_{d_r} / λ_{d_r+1}`, when both exist and the denominator is positive.
    pub fn spectral_gap(&self) -> Option<f64> {
        let (a, b) = (self.eigenvalues.get(self.d_r.wrapping_sub(1))?, self.eigenvalues.get(self.d_r)?);
        (*b > 0.0).then(|| a / b)
    }

    /// Row `i` of the result is `W_rᵀ x_i`.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        project(&self.w_r(), x)
    }

    pub fn project_point(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (k, o) in out.iter_mut().enumerate().take(self.d_r) {
            let col = self.eigenvectors.column(k);
            let mut s = 0.0;
            for j in 0..d {
                s += col[j] * x[j];
            }
            *o = s;
        }
    }
}

/// `X W_r` for inputs stored as rows.
pub fn project(w_r: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != w_r.nrows() {
        return Err(Error::DimensionMismatch {
            context: "projection input",
            expected: w_r.nrows(),
            got: x.ncols(),
        });
    }
    Ok(x * w_r)
}

/// Fits a surrogate on `(features, y)` for a candidate reduced dimension.
pub trait FeatureFitter {
    type Model;

    fn fit(&mut self, d_r: usize, features: &DMatrix<f64>, y: &[f64]) -> Result<Self::Model>;

    fn predict_mean(&self, model: &Self::Model, psi: &[f64]) -> f64;
}

/// hGP fitter that remembers the last parameters per dimension and uses
/// them as a warm start; a dimension seen for the first time gets the full
/// multi-start.
#[derive(Clone, Debug, Default)]
pub struct HgpFitter {
    pub config: HgpConfig,
    cache: BTreeMap<usize, HgpParams>,
    pub fits: usize,
    pub warm_fits: usize,
}

impl HgpFitter {
    pub fn new(config: HgpConfig) -> Self {
        HgpFitter {
            config,
            ..Default::default()
        }
    }

    pub fn cached(&self, d_r: usize) -> Option<&HgpParams> {
        self.cache.get(&d_r)
    }

    pub fn forget(&mut self) {
        self.cache.clear();
    }
}

impl FeatureFitter for HgpFitter {
    type Model = HgpFit;

    fn fit(&mut self, d_r: usize, features: &DMatrix<f64>, y: &[f64]) -> Result<HgpFit> {
        let warm = self.cache.get(&d_r).cloned();
        let fit = match HgpModel::fit(features, y, &self.config, warm.as_ref()) {
            Ok(f) => f,
            // A warm start that cannot be conditioned falls back to the grid.
            Err(_) if warm.is_some() => HgpModel::fit(features, y, &self.config, None)?,
            Err(e) => return Err(e),
        };
        self.fits += 1;
        if warm.is_some() {
            self.warm_fits += 1;
        }
        self.cache.insert(d_r, fit.model.params().clone());
        Ok(fit)
    }

    fn predict_mean(&self, model: &HgpFit, psi: &[f64]) -> f64 {
        model.model.predict_mean(psi)
    }
}

#[derive(Clone, Debug)]
pub struct DimensionSelection<M> {
    pub d_r: usize,
    pub model: M,
    pub projection: SubspaceProjection,
    pub features: DMatrix<f64>,
    /// `(d_r, ε_d)` for every dimension tried, in order.
    pub eps_trace: Vec<(usize, f64)>,
    pub target: f64,
    /// False when `d_max` was reached without meeting the target.
    pub converged: bool,
}

/// In-sample RMSE of the surrogate mean on its own training features.
pub fn in_sample_rmse<F: FeatureFitter>(fitter: &F, model: &F::Model, features: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len();
    let mut psi = vec![0.0; features.ncols()];
    let mut s = 0.0;
    for i in 0..n {
        for (c, p) in psi.iter_mut().enumerate() {
            *p = features[(i, c)];
        }
        let e = y[i] - fitter.predict_mean(model, &psi);
        s += e * e;
    }
    (s / n as f64).sqrt()
}

/// Default target: `rel · std(y)` (population std).
pub fn default_target(y: &[f64], rel: f64) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    rel * (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// Grows `d_r` from 1 until the in-sample RMSE of the fitted surrogate is
/// at most `target`, or `d_max` is reached.
pub fn select_dimension<F: FeatureFitter>(
    inputs: &DMatrix<f64>,
    y: &[f64],
    eig: &SubspaceProjection,
    target: f64,
    d_max: usize,
    fitter: &mut F,
) -> Result<DimensionSelection<F::Model>> {
    let n = inputs.nrows();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "dimension selection needs n >= 2 matched outputs, got {n} inputs and {} outputs",
            y.len()
        )));
    }
    if !(target > 0.0) {
        return Err(Error::InvalidParameter(format!("ε_d target must be > 0, got {target}")));
    }
    if d_max == 0 || d_max > eig.dim() {
        return Err(Error::InvalidParameter(format!(
            "d_max must be in 1..={}, got {d_max}",
            eig.dim()
        )));
    }
    let mut eps_trace = Vec::new();
    let mut last = None;
    for d in 1..=d_max {
        let proj = eig.with_dimension(d)?;
        let features = proj.project(inputs)?;
        let model = fitter
            .fit(d, &features, y)
            .map_err(|e| e.context(format!("fitting surrogate at d_r = {d}")))?;
        let eps = in_sample_rmse(fitter, &model, &features, y);
        eps_trace.push((d, eps));
        if eps <= target {
            return Ok(DimensionSelection {
                d_r: d,
                model,
                projection: proj,
                features,
                eps_trace,
                target,
                converged: true,
            });
        }
        last = Some((model, proj, features));
    }
    let (model, projection, features) = last.expect("d_max >= 1");
    Ok(DimensionSelection {
        d_r: d_max,
        model,
        projection,
        features,
        eps_trace,
        target,
        converged: false,
    })
}
