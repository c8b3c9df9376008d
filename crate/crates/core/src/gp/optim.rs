//! Limited-memory BFGS with Armijo backtracking, and a sigmoid map that
//! turns box constraints into an unconstrained problem.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    /// Stop once `|f_prev − f| <= rel_tol · max(|f|, 1)`.
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iterations: 500,
            rel_tol: 1e-7,
            grad_tol: 1e-9,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`. The closure returns the value and gradient; an `Err` or a
/// non-finite value is treated as +∞ by the line search.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (mut fx, mut g) = f(x0)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimizer("objective is not finite at the start point".into()));
    }
    let mut x = x0.to_vec();
    let mut evaluations = 1;
    let mut trace = vec![fx];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }

        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            for i in 0..n {
                d[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            for v in &mut d {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for i in 0..n {
                d[i] += (a - b) * s[i];
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }

        let mut step = if hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            evaluations += 1;
            if let Ok((fn_, gn)) = f(&xn) {
                if fn_.is_finite()
                    && gn.iter().all(|v| v.is_finite())
                    && fn_ <= fx + 1e-4 * step * slope
                {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // No descent possible along d: treat as a stationary point.
            converged = true;
            break;
        };
        iterations += 1;

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }

        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        trace.push(fx);
        if improvement <= opts.rel_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(LbfgsResult {
        x,
        f: fx,
        iterations,
        evaluations,
        converged,
        trace,
    })
}

/// Maps `z ∈ ℝ` to `lo + (hi − lo)·sigmoid(z)` per coordinate.
#[derive(Clone, Debug)]
pub struct SigmoidBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SigmoidBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidParameter("every lower bound must be below its upper bound".into()));
        }
        Ok(SigmoidBounds { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn to_bounded(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&z, (&l, &u))| l + (u - l) * sigmoid(z))
            .collect()
    }

    /// Inverse map; values are pulled a little inside the box first.
    pub fn to_free(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&t, (&l, &u))| {
                let p = ((t - l) / (u - l)).clamp(1e-9, 1.0 - 1e-9);
                (p / (1.0 - p)).ln()
            })
            .collect()
    }

    /// Chain rule: gradient with respect to `z` from the gradient in θ.
    pub fn pull_back(&self, z: &[f64], grad_theta: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(grad_theta)
            .zip(self.lower.iter().zip(&self.upper))
            .map(|((&z, &g), (&l, &u))| {
                let s = sigmoid(z);
                g * (u - l) * s * (1.0 - s)
            })
            .collect()
    }
}
