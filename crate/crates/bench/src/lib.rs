//! Shared fixtures for the benchmarks.

use aashgp::gp::{HgpConfig, HgpModel, HgpParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth two-feature response with input-dependent noise.
pub fn toy_data(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0f64..2.0));
    let y = (0..n)
        .map(|i| {
            let s = 0.05 + 0.1 * x[(i, 0)].abs();
            x[(i, 0)].sin() * (0.5 * x[(i, d - 1)]).cos() + s * (rng.random::<f64>() - 0.5)
        })
        .collect();
    (x, y)
}

/// Flat parameter vector in the layout used by the bound routine.
pub fn toy_theta(d: usize, n: usize) -> Vec<f64> {
    HgpParams {
        log_var_f: 0.0,
        log_ls_f: vec![0.0; d],
        log_var_g: 0.0,
        log_ls_g: vec![0.5; d],
        mu0: -3.0,
        log_lambda: vec![0.5f64.ln(); n],
    }
    .to_vec()
}

pub fn fitted_model(n: usize, d: usize) -> HgpModel {
    let (x, y) = toy_data(n, d, 1);
    let cfg = HgpConfig {
        restarts: 1,
        ..HgpConfig::default()
    };
    HgpModel::fit(&x, &y, &cfg, None).expect("toy fit").model
}

pub fn as_vector(y: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(y)
}
