//! Heteroscedastic GP: `y = f(ψ) + ε`, `ε ~ N(0, exp g(ψ))`, with
//! independent GP priors on `f` and `g` (prior mean μ₀ on `g`).
//!
//! The latent `g` is handled by the marginalized variational bound. The
//! Gaussian posterior on `g` over the training inputs is parametrized by a
//! positive diagonal Λ:
//!
//! ```text
//! m = K_g (Λ − ½I) 1 + μ₀ 1,   V = (K_g⁻¹ + Λ)⁻¹,   R_ii = exp(m_i − V_ii / 2)
//! F = ln N(y | 0, K_f + R) − ¼ tr V − KL(N(m, V) ‖ N(μ₀1, K_g))
//! ```
//!
//! With `L = Λ^½` and `B = I + L K_g L` every inverse goes through the
//! well-conditioned `B`:
//!
//! ```text
//! V  = K_g − K_g M₁ K_g,   M₁ = L B⁻¹ L
//! KL = ½ [tr B⁻¹ + aᵀ K_g a − n + ln |B|],   a = (Λ − ½I) 1
//! ```

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{median_pairwise_distance, SeArdKernel};
use super::optim::{minimize, LbfgsOptions, SigmoidBounds};
use super::{check_training, restart_scales, Prediction, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, solve_lower};

/// Log-space hyperparameters and variational parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgpParams {
    pub log_var_f: f64,
    pub log_ls_f: Vec<f64>,
    pub log_var_g: f64,
    pub log_ls_g: Vec<f64>,
    pub mu0: f64,
    /// ln Λ_ii, one per training point.
    pub log_lambda: Vec<f64>,
}

impl HgpParams {
    pub fn dim(&self) -> usize {
        self.log_ls_f.len()
    }

    pub fn n(&self) -> usize {
        self.log_lambda.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + 2 * self.dim() + self.n());
        v.push(self.log_var_f);
        v.extend(&self.log_ls_f);
        v.push(self.log_var_g);
        v.extend(&self.log_ls_g);
        v.push(self.mu0);
        v.extend(&self.log_lambda);
        v
    }

    pub fn from_vec(v: &[f64], d: usize) -> Self {
        let mut i = 0;
        let mut take = |k: usize| {
            let s = &v[i..i + k];
            i += k;
            s.to_vec()
        };
        let log_var_f = take(1)[0];
        let log_ls_f = take(d);
        let log_var_g = take(1)[0];
        let log_ls_g = take(d);
        let mu0 = take(1)[0];
        let log_lambda = v[3 + 2 * d..].to_vec();
        HgpParams {
            log_var_f,
            log_ls_f,
            log_var_g,
            log_ls_g,
            mu0,
            log_lambda,
        }
    }

    pub fn kernel_f(&self) -> SeArdKernel {
        SeArdKernel::from_log(self.log_var_f, &self.log_ls_f)
    }

    pub fn kernel_g(&self) -> SeArdKernel {
        SeArdKernel::from_log(self.log_var_g, &self.log_ls_g)
    }

    /// Same hyperparameters with Λ resized to `n` points; new entries are ½.
    pub fn resized(&self, n: usize) -> Self {
        let mut p = self.clone();
        p.log_lambda.resize(n, 0.5f64.ln());
        p
    }
}

/// Box constraints in log space (μ₀ is unlogged).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgpBounds {
    pub log_var: (f64, f64),
    pub log_ls_f: (f64, f64),
    pub log_ls_g: (f64, f64),
    pub mu0: (f64, f64),
    pub log_lambda: (f64, f64),
}

impl Default for HgpBounds {
    fn default() -> Self {
        HgpBounds {
            log_var: (-10.0, 10.0),
            log_ls_f: (1e-3f64.ln(), 1e3f64.ln()),
            log_ls_g: (1e-2f64.ln(), 1e3f64.ln()),
            mu0: (-30.0, 5.0),
            log_lambda: (-20.0, 10.0),
        }
    }
}

impl HgpBounds {
    fn sigmoid(&self, d: usize, n: usize) -> Result<SigmoidBounds> {
        let mut lo = Vec::with_capacity(3 + 2 * d + n);
        let mut hi = Vec::with_capacity(3 + 2 * d + n);
        let mut push = |(l, h): (f64, f64), k: usize| {
            lo.extend(std::iter::repeat(l).take(k));
            hi.extend(std::iter::repeat(h).take(k));
        };
        push(self.log_var, 1);
        push(self.log_ls_f, d);
        push(self.log_var, 1);
        push(self.log_ls_g, d);
        push(self.mu0, 1);
        push(self.log_lambda, n);
        SigmoidBounds::new(lo, hi)
    }
}

#[derive(Clone, Debug)]
pub struct HgpConfig {
    pub restarts: usize,
    pub standardize: bool,
    pub optimizer: LbfgsOptions,
    pub bounds: HgpBounds,
}

impl Default for HgpConfig {
    fn default() -> Self {
        HgpConfig {
            restarts: 5,
            standardize: true,
            optimizer: LbfgsOptions::default(),
            bounds: HgpBounds::default(),
        }
    }
}

/// The pieces of the bound, kept separately for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub log_likelihood: f64,
    pub trace_term: f64,
    pub kl: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.log_likelihood + self.trace_term - self.kl
    }
}

struct State {
    terms: BoundTerms,
    chol_a: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    chol_b: Cholesky<f64, Dyn>,
    l: DVector<f64>,
    a: DVector<f64>,
    r: DVector<f64>,
    grad: Option<Vec<f64>>,
}

fn evaluate(x: &DMatrix<f64>, y: &DVector<f64>, p: &HgpParams, want_grad: bool) -> Result<State> {
    let n = x.nrows();
    let kern_f = p.kernel_f();
    let kern_g = p.kernel_g();
    let kf = kern_f.gram(x);
    let kg = kern_g.gram(x);
    let lam = DVector::from_iterator(n, p.log_lambda.iter().map(|v| v.exp()));
    let l = lam.map(f64::sqrt);
    let a = lam.add_scalar(-0.5);

    let b = DMatrix::from_fn(n, n, |i, j| l[i] * kg[(i, j)] * l[j] + if i == j { 1.0 } else { 0.0 });
    let chol_b = cholesky(b, "I + Λ^½ K_g Λ^½")?;
    let b_inv = chol_b.inverse();
    let m1 = DMatrix::from_fn(n, n, |i, j| l[i] * b_inv[(i, j)] * l[j]);
    // K_g M₁; M₁ K_g is its transpose.
    let kg_m1 = &kg * &m1;
    let v_diag = DVector::from_fn(n, |i, _| kg[(i, i)] - kg_m1.row(i).dot(&kg.column(i).transpose()));

    let mu = &kg * &a;
    let r = DVector::from_fn(n, |i, _| (mu[i] + p.mu0 - 0.5 * v_diag[i]).exp());
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("heteroscedastic noise overflowed".into()));
    }
    let mut amat = kf.clone();
    for i in 0..n {
        amat[(i, i)] += r[i];
    }
    let chol_a = cholesky(amat, "K_f + R")?;
    let alpha = chol_a.solve(y);

    let log_likelihood = -0.5 * y.dot(&alpha) - 0.5 * log_det(&chol_a) - 0.5 * n as f64 * (2.0 * PI).ln();
    let trace_term = -0.25 * v_diag.sum();
    let kl = 0.5 * (b_inv.trace() + a.dot(&mu) - n as f64 + log_det(&chol_b));
    let terms = BoundTerms {
        log_likelihood,
        trace_term,
        kl,
    };

    let grad = if want_grad {
        let a_inv = chol_a.inverse();
        let mut q_mat = &alpha * alpha.transpose() - a_inv;
        let q = DVector::from_fn(n, |i, _| 0.5 * q_mat[(i, i)] * r[i]);
        let c = q.map(|v| -0.5 * v - 0.25);

        let mut grad = Vec::with_capacity(3 + 2 * p.dim() + n);
        q_mat *= 0.5;
        grad.extend(kern_f.trace_gradients(x, &kf, &q_mat));

        // Full V for the Λ gradient: V = K_g − (K_g M₁) K_g.
        let v_full = &kg - &kg_m1 * &kg;
        // P = I − M₁ K_g = (I − K_g M₁)ᵀ.
        let mut pt = -kg_m1.clone();
        for i in 0..n {
            pt[(i, i)] += 1.0;
        }
        let p_mat = pt.transpose();
        let pc = DMatrix::from_fn(n, n, |i, j| p_mat[(i, j)] * c[j]);
        let b_inv2 = &b_inv * &b_inv;
        let mut m_g = &pc * &pt;
        let qa = &q - &a;
        for i in 0..n {
            for j in 0..n {
                m_g[(i, j)] += 0.5 * (a[i] * q[j] + q[i] * a[j])
                    - 0.5 * (m1[(i, j)] - l[i] * b_inv2[(i, j)] * l[j] + a[i] * a[j]);
            }
        }
        grad.extend(kern_g.trace_gradients(x, &kg, &m_g));
        grad.push(q.sum());

        let kg_qa = &kg * &qa;
        let w = c + lam.map(|v| 0.5 * v);
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                let v = v_full[(j, k)];
                s += v * v * w[k];
            }
            grad.push((kg_qa[j] - s) * lam[j]);
        }
        Some(grad)
    } else {
        None
    };

    Ok(State {
        terms,
        chol_a,
        alpha,
        chol_b,
        l,
        a,
        r,
        grad,
    })
}

/// Bound value and gradient in the flat layout of [`HgpParams::to_vec`].
pub fn bound_and_grad(x: &DMatrix<f64>, y: &DVector<f64>, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = HgpParams::from_vec(theta, x.ncols());
    let s = evaluate(x, y, &p, true)?;
    Ok((s.terms.total(), s.grad.expect("gradient requested")))
}

/// Bound terms for fixed parameters.
pub fn bound_terms(x: &DMatrix<f64>, y: &DVector<f64>, p: &HgpParams) -> Result<BoundTerms> {
    Ok(evaluate(x, y, p, false)?.terms)
}

/// `KL(N(m, V) ‖ N(μ, K))` by dense Cholesky factorizations.
pub fn gaussian_kl(m: &DVector<f64>, v: &DMatrix<f64>, mu: &DVector<f64>, k: &DMatrix<f64>) -> Result<f64> {
    let n = m.len() as f64;
    let ck = cholesky(k.clone(), "prior covariance")?;
    let cv = cholesky(v.clone(), "posterior covariance")?;
    let diff = m - mu;
    let tr = ck.solve(v).trace();
    Ok(0.5 * (tr + diff.dot(&ck.solve(&diff)) - n + log_det(&ck) - log_det(&cv)))
}

/// Per-restart summary of an hGP fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartSummary {
    pub initial_bound: f64,
    pub final_bound: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct HgpFit {
    pub model: HgpModel,
    pub restarts: Vec<RestartSummary>,
    /// Bound trace of the winning restart.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HgpModel {
    params: HgpParams,
    scaler: Standardizer,
    x: DMatrix<f64>,
    terms: BoundTerms,
    chol_a: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    chol_b: Cholesky<f64, Dyn>,
    l: DVector<f64>,
    a: DVector<f64>,
    r: DVector<f64>,
    // Row-major copy of the working inputs for the batch mean path.
    x_rows: Vec<f64>,
    inv_ls_f: Vec<f64>,
}

impl HgpModel {
    /// Conditions on `(x, y)` with fixed parameters, in the working space
    /// chosen by `standardize`.
    pub fn from_params(x: &DMatrix<f64>, y: &[f64], params: HgpParams, standardize: bool) -> Result<Self> {
        check_training(x, y, 1)?;
        if params.dim() != x.ncols() || params.log_ls_g.len() != x.ncols() || params.n() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "hGP parameters",
                expected: x.ncols(),
                got: params.dim(),
            });
        }
        let scaler = if standardize {
            Standardizer::fit(x, y)
        } else {
            Standardizer::identity(x.ncols())
        };
        let xs = scaler.inputs(x);
        let ys = scaler.outputs(y);
        Self::assemble(xs, &ys, params, scaler)
    }

    fn assemble(xs: DMatrix<f64>, ys: &DVector<f64>, params: HgpParams, scaler: Standardizer) -> Result<Self> {
        let s = evaluate(&xs, ys, &params, false)?;
        if !s.terms.total().is_finite() {
            return Err(Error::Conditioning("hGP bound is not finite".into()));
        }
        let (n, d) = xs.shape();
        let mut x_rows = Vec::with_capacity(n * d);
        for i in 0..n {
            x_rows.extend(xs.row(i).iter());
        }
        let inv_ls_f = params.log_ls_f.iter().map(|v| (-2.0 * v).exp()).collect();
        Ok(HgpModel {
            params,
            scaler,
            x: xs,
            terms: s.terms,
            chol_a: s.chol_a,
            alpha: s.alpha,
            chol_b: s.chol_b,
            l: s.l,
            a: s.a,
            r: s.r,
            x_rows,
            inv_ls_f,
        })
    }

    /// Default starting points: `restarts` lengthscale scales log-spaced
    /// over [0.1, 10] × median pairwise distance, μ₀ = ln(var y / 100),
    /// Λ = ½.
    pub fn initial_params(xs: &DMatrix<f64>, ys: &DVector<f64>, restarts: usize) -> Vec<HgpParams> {
        let (n, d) = xs.shape();
        let var_y = ys.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let var_y = if var_y > 0.0 { var_y } else { 1.0 };
        let med = median_pairwise_distance(xs);
        restart_scales(restarts.max(1))
            .into_iter()
            .map(|s| HgpParams {
                log_var_f: var_y.ln(),
                log_ls_f: vec![(s * med).ln(); d],
                log_var_g: 0.0,
                log_ls_g: vec![(s * med).ln(); d],
                mu0: (var_y / 100.0).ln(),
                log_lambda: vec![0.5f64.ln(); n],
            })
            .collect()
    }

    /// Maximizes the bound. With `warm` a single ascent starts from it
    /// (resized to the current `n`); otherwise the multi-start grid is used.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], cfg: &HgpConfig, warm: Option<&HgpParams>) -> Result<HgpFit> {
        check_training(x, y, 3)?;
        let (n, d) = x.shape();
        let scaler = if cfg.standardize {
            Standardizer::fit(x, y)
        } else {
            Standardizer::identity(d)
        };
        let xs = scaler.inputs(x);
        let ys = scaler.outputs(y);
        let bounds = cfg.bounds.sigmoid(d, n)?;

        let starts = match warm {
            Some(w) if w.dim() == d => vec![w.resized(n)],
            _ => Self::initial_params(&xs, &ys, cfg.restarts),
        };

        let mut summaries = Vec::with_capacity(starts.len());
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for start in starts {
            let z0 = bounds.to_free(&start.to_vec());
            let theta0 = bounds.to_bounded(&z0);
            let initial_bound = evaluate(&xs, &ys, &HgpParams::from_vec(&theta0, d), false)
                .map(|s| s.terms.total())
                .unwrap_or(f64::NEG_INFINITY);
            let objective = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
                let theta = bounds.to_bounded(z);
                let (v, g) = bound_and_grad(&xs, &ys, &theta)?;
                let gz = bounds.pull_back(z, &g);
                Ok((-v, gz.into_iter().map(|g| -g).collect()))
            };
            match minimize(objective, &z0, &cfg.optimizer) {
                Ok(r) => {
                    let fb = -r.f;
                    summaries.push(RestartSummary {
                        initial_bound,
                        final_bound: Some(fb),
                        iterations: r.iterations,
                        converged: r.converged,
                        error: None,
                    });
                    if best.as_ref().is_none_or(|(b, _, _)| fb > *b) {
                        let trace = r.trace.iter().map(|v| -v).collect();
                        best = Some((fb, bounds.to_bounded(&r.x), trace));
                    }
                }
                Err(e) => summaries.push(RestartSummary {
                    initial_bound,
                    final_bound: None,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                }),
            }
        }
        let Some((_, theta, trace)) = best else {
            let msgs: Vec<String> = summaries.iter().filter_map(|s| s.error.clone()).collect();
            return Err(Error::Optimizer(format!("every hGP restart failed: {}", msgs.join("; "))));
        };
        let model = Self::assemble(xs, &ys, HgpParams::from_vec(&theta, d), scaler)?;
        Ok(HgpFit {
            model,
            restarts: summaries,
            trace,
        })
    }

    pub fn params(&self) -> &HgpParams {
        &self.params
    }

    pub fn scaler(&self) -> &Standardizer {
        &self.scaler
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn bound(&self) -> f64 {
        self.terms.total()
    }

    pub fn bound_terms(&self) -> BoundTerms {
        self.terms
    }

    /// `R_ii` at the training points, in output units squared.
    pub fn training_noise(&self) -> Vec<f64> {
        self.r.iter().map(|&v| self.scaler.variance_back(v)).collect()
    }

    pub fn predict(&self, p: &[f64]) -> Prediction {
        let ps = self.scaler.point(p);
        let kf = self.params.kernel_f();
        let kg = self.params.kernel_g();
        let kfs = kf.cross(&self.x, &ps);
        let mean = kfs.dot(&self.alpha);
        let gamma2 = (kf.signal_variance - solve_lower(&self.chol_a, &kfs).norm_squared()).max(0.0);
        let kgs = kg.cross(&self.x, &ps);
        let chi = kgs.dot(&self.a) + self.params.mu0;
        let lk = kgs.component_mul(&self.l);
        let eta2 = (kg.signal_variance - solve_lower(&self.chol_b, &lk).norm_squared()).max(0.0);
        let noise = (chi + 0.5 * eta2).exp();
        Prediction {
            mean: self.scaler.mean_back(mean),
            variance: self.scaler.variance_back(noise + gamma2),
            latent_variance: self.scaler.variance_back(gamma2),
            noise_variance: self.scaler.variance_back(noise),
        }
    }

    /// Predictive mean only; the hot path for pool-wide estimates.
    pub fn predict_mean(&self, p: &[f64]) -> f64 {
        let d = self.dim();
        let mut ps = [0.0f64; 16];
        let ps: &mut [f64] = if d <= 16 { &mut ps[..d] } else { return self.predict(p).mean };
        for c in 0..d {
            ps[c] = (p[c] - self.scaler.x_mean[c]) / self.scaler.x_scale[c];
        }
        let sf = self.params.log_var_f.exp();
        let mut acc = 0.0;
        for (i, row) in self.x_rows.chunks_exact(d).enumerate() {
            let mut r2 = 0.0;
            for c in 0..d {
                let t = row[c] - ps[c];
                r2 += t * t * self.inv_ls_f[c];
            }
            acc += self.alpha[i] * (-0.5 * r2).exp();
        }
        self.scaler.mean_back(sf * acc)
    }
}
