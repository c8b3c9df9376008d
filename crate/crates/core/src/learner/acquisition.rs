//! Critical-set screening, max-min selection, the surrogate failure
//! probability estimate and the convergence test.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|y_f − μ| / max(σ, floor)`.
pub fn learning_score(mean: f64, std: f64, y_f: f64, floor: f64) -> f64 {
    (y_f - mean).abs() / std.max(floor)
}

/// Indices `k` with `|y_f − μ_k| / σ_k <= ε_c`, σ floored at `floor`.
pub fn critical_set(means: &[f64], stds: &[f64], y_f: f64, eps_c: f64, floor: f64) -> Vec<usize> {
    means
        .iter()
        .zip(stds)
        .enumerate()
        .filter(|(_, (&m, &s))| learning_score(m, s, y_f, floor) <= eps_c)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Row of the candidate pool.
    pub index: usize,
    /// Distance to the nearest training feature (max-min rule only).
    pub min_distance: Option<f64>,
    /// True when the critical set was empty and the lowest score was used.
    pub fallback: bool,
}

fn sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..a.ncols() {
        let t = a[(i, c)] - b[(j, c)];
        s += t * t;
    }
    s
}

/// Among `critical` rows of `pool`, the one farthest (Euclidean, nearest
/// neighbour) from the rows of `training`; ties go to the lowest index.
/// With an empty critical set, the row with the lowest `scores` entry.
pub fn select_next(
    critical: &[usize],
    pool: &DMatrix<f64>,
    training: &DMatrix<f64>,
    scores: &[f64],
) -> Result<Selection> {
    if pool.nrows() == 0 {
        return Err(Error::Config("candidate pool is empty".into()));
    }
    if training.nrows() == 0 {
        return Err(Error::InvalidInput("training features are empty".into()));
    }
    if pool.ncols() != training.ncols() {
        return Err(Error::DimensionMismatch {
            context: "candidate vs training features",
            expected: training.ncols(),
            got: pool.ncols(),
        });
    }
    if critical.is_empty() {
        if scores.len() != pool.nrows() {
            return Err(Error::DimensionMismatch {
                context: "learning scores",
                expected: pool.nrows(),
                got: scores.len(),
            });
        }
        let mut best = 0;
        for (k, s) in scores.iter().enumerate() {
            if *s < scores[best] {
                best = k;
            }
        }
        return Ok(Selection {
            index: best,
            min_distance: None,
            fallback: true,
        });
    }
    let mut best: Option<(usize, f64)> = None;
    let mut sorted = critical.to_vec();
    sorted.sort_unstable();
    for &k in &sorted {
        if k >= pool.nrows() {
            return Err(Error::InvalidInput(format!("critical index {k} outside the pool")));
        }
        let mut dmin = f64::INFINITY;
        for i in 0..training.nrows() {
            let d = sq_dist(pool, k, training, i);
            if d < dmin {
                dmin = d;
                // Cannot beat the incumbent any more.
                if best.is_some_and(|(_, b)| dmin <= b) {
                    break;
                }
            }
        }
        if best.is_none_or(|(_, b)| dmin > b) {
            best = Some((k, dmin));
        }
    }
    let (index, d2) = best.expect("non-empty critical set");
    Ok(Selection {
        index,
        min_distance: Some(d2.sqrt()),
        fallback: false,
    })
}

/// `(1/N) Σ 1(μ_k >= y_f)`.
pub fn estimate_pf(means: &[f64], y_f: f64) -> Result<f64> {
    if means.is_empty() {
        return Err(Error::InvalidInput("failure-probability pool is empty".into()));
    }
    Ok(means.iter().filter(|&&m| m >= y_f).count() as f64 / means.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStatus {
    /// `|(P^(m) − P^(m−1)) / P^(m)|`; infinite when `P^(m) = 0`.
    pub eps1: Option<f64>,
    /// `|ε₁^(m−1) − ε₁^(m)|`.
    pub eps2: Option<f64>,
    pub converged: bool,
}

fn eps1_at(history: &[f64], m: usize) -> f64 {
    let (prev, cur) = (history[m - 1], history[m]);
    if cur == 0.0 {
        f64::INFINITY
    } else {
        ((cur - prev) / cur).abs()
    }
}

/// Convergence test on the last entry of `history`; a decision needs at
/// least three entries.
pub fn check_convergence(history: &[f64], tol1: f64, tol2: f64) -> ConvergenceStatus {
    let m = history.len();
    if m < 2 {
        return ConvergenceStatus {
            eps1: None,
            eps2: None,
            converged: false,
        };
    }
    let e1 = eps1_at(history, m - 1);
    let e2 = if m >= 3 {
        let prev = eps1_at(history, m - 2);
        let d = (prev - e1).abs();
        Some(if d.is_nan() { f64::INFINITY } else { d })
    } else {
        None
    };
    let converged = history[m - 1] != 0.0 && e1 <= tol1 && e2.is_some_and(|e| e <= tol2);
    ConvergenceStatus {
        eps1: Some(e1),
        eps2: e2,
        converged,
    }
}
