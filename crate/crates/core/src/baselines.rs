//! Crude Monte Carlo and FORM (HL-RF) reference solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::rv::{norm_cdf, population_block, population_blocks, RandomVectorSpec, SampleMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub pf: f64,
    pub n: usize,
    pub failures: usize,
    /// `sqrt((1 − pf) / (pf n))`; infinite when no failure was observed.
    pub cov: f64,
    pub seed: u64,
}

impl McsResult {
    pub fn std_error(&self) -> f64 {
        (self.pf * (1.0 - self.pf) / self.n as f64).sqrt()
    }
}

/// Fraction of `n` samples with `M(x) >= y_f`. Samples come from the
/// population streams, block by block, so the result is independent of how
/// the blocks are processed and the first `n` rows match any larger run.
pub fn mcs(model: &ModelSpec, spec: &RandomVectorSpec, n: usize, seed: u64) -> Result<McsResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("MCS sample size must be >= 1".into()));
    }
    if model.dimension() != spec.dim() {
        return Err(Error::DimensionMismatch {
            context: "MCS model vs random vector",
            expected: spec.dim(),
            got: model.dimension(),
        });
    }
    let mut buf = SampleMatrix::zeros(0, spec.dim());
    let mut failures = 0usize;
    for b in 0..population_blocks(n) {
        let rows = population_block(spec, seed, b, n, &mut buf);
        for (i, x) in buf.rows().take(rows).enumerate() {
            let y = model.value(x).map_err(|e| Error::Sample {
                index: b * crate::rv::POPULATION_BLOCK + i,
                source: Box::new(e),
            })?;
            if model.is_failure(y) {
                failures += 1;
            }
        }
    }
    let pf = failures as f64 / n as f64;
    let cov = if failures == 0 {
        f64::INFINITY
    } else {
        ((1.0 - pf) / (pf * n as f64)).sqrt()
    };
    Ok(McsResult {
        pf,
        n,
        failures,
        cov,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormResult {
    pub beta: f64,
    pub pf: f64,
    pub u_star: Vec<f64>,
    pub x_star: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Model evaluations (value and gradient pairs).
    pub n_s: usize,
    pub n_g: usize,
    /// `g(u*)` at the returned point.
    pub g_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormOptions {
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for FormOptions {
    fn default() -> Self {
        FormOptions {
            max_iterations: 100,
            tol: 1e-6,
        }
    }
}

/// HL-RF iteration on `g(u) = y_f − M(T(u))` from `start` (the origin when
/// `None`). `beta` is `‖u*‖` signed by `g(0)`.
pub fn form_hlrf(
    model: &ModelSpec,
    spec: &RandomVectorSpec,
    start: Option<&[f64]>,
    opts: &FormOptions,
) -> Result<FormResult> {
    let d = spec.dim();
    if model.dimension() != d {
        return Err(Error::DimensionMismatch {
            context: "FORM model vs random vector",
            expected: d,
            got: model.dimension(),
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("FORM tolerance must be > 0, got {}", opts.tol)));
    }
    let mut u = match start {
        Some(s) if s.len() == d => s.to_vec(),
        Some(s) => {
            return Err(Error::DimensionMismatch {
                context: "FORM start point",
                expected: d,
                got: s.len(),
            })
        }
        None => vec![0.0; d],
    };

    let mut evals = 0usize;
    let mut eval_g = |u: &[f64]| -> Result<(f64, Vec<f64>)> {
        let x = spec.from_standard(u)?;
        let e = model.eval(&x)?;
        evals += 1;
        let jac = spec.jacobian_diag(u)?;
        let grad = e.grad.iter().zip(&jac).map(|(g, j)| -g * j).collect();
        Ok((model.threshold - e.y, grad))
    };

    let g_origin = if start.is_none() {
        None
    } else {
        Some(eval_g(&vec![0.0; d])?.0)
    };
    let (mut g, mut grad) = eval_g(&u)?;
    let sign0 = g_origin.unwrap_or(g);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let gn2: f64 = grad.iter().map(|v| v * v).sum();
        if !(gn2 > 0.0) {
            return Err(Error::Solver("FORM gradient vanished in standard space".into()));
        }
        let gu: f64 = grad.iter().zip(&u).map(|(a, b)| a * b).sum();
        let k = (gu - g) / gn2;
        let next: Vec<f64> = grad.iter().map(|v| k * v).collect();
        let step: f64 = next.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        u = next;
        iterations += 1;
        let (gn, gradn) = eval_g(&u)?;
        g = gn;
        grad = gradn;
        if step <= opts.tol {
            converged = true;
            break;
        }
    }
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let beta = if sign0 < 0.0 { -norm } else { norm };
    let x_star = spec.from_standard(&u)?;
    Ok(FormResult {
        beta,
        pf: norm_cdf(-beta),
        u_star: u,
        x_star,
        iterations,
        converged,
        n_s: evals,
        n_g: evals,
        g_star: g,
    })
}
