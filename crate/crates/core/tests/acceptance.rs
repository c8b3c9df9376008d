//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use aashgp::baselines::{form_hlrf, mcs, FormOptions};
use aashgp::gp::hetero::{bound_and_grad, bound_terms, gaussian_kl, HgpParams};
use aashgp::gp::homoscedastic::log_marginal_and_grad;
use aashgp::gp::{GpModel, HgpModel, SeArdKernel};
use aashgp::learner::{check_convergence, critical_set, estimate_pf, population_pf, run, select_next, LearnerConfig, RunOutcome, RunStatus};
use aashgp::linalg::JITTER;
use aashgp::models::{GradientMode, LinearModel, ModelSpec, ProductModel, TrussGeometry, TrussModel};
use aashgp::rv::{norm_cdf, population_block, population_blocks, sample, MarginalSpec, RandomVectorSpec, SampleMatrix};
use aashgp::subspace::{eigendecompose, estimate_c};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn example1(d: usize) -> (ModelSpec, RandomVectorSpec) {
    let m = ModelSpec::new(Box::new(ProductModel::benchmark(d, true)), 0.65, GradientMode::Analytic).unwrap();
    let s = RandomVectorSpec::iid(MarginalSpec::uniform(0.0, 1.0).unwrap(), d).unwrap();
    (m, s)
}

fn linear_benchmark(d: usize) -> (ModelSpec, RandomVectorSpec) {
    let m = ModelSpec::new(Box::new(LinearModel::negated(3.0, d)), 0.0, GradientMode::Analytic).unwrap();
    let s = RandomVectorSpec::iid(MarginalSpec::gaussian(0.0, 1.0).unwrap(), d).unwrap();
    (m, s)
}

const DIMS: [usize; 3] = [30, 50, 100];
const PUBLISHED_MCS: [f64; 3] = [5.77e-3, 4.96e-3, 3.33e-3];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const REFERENCE_SEED: u64 = 0;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

// ---------------------------------------------------------------- 1

fn c1(reference: &mut [f64; 3]) -> Check {
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for (k, &d) in DIMS.iter().enumerate() {
        let (m, s) = example1(d);
        let t = Instant::now();
        let r = mcs(&m, &s, 1_000_000, REFERENCE_SEED).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        reference[k] = r.pf;
        let se = r.std_error();
        let z = (r.pf - PUBLISHED_MCS[k]).abs() / se;
        parts.push(format!("D={d}: {:.4e} (published {:.2e}, {z:.2} SE, {secs:.1}s)", r.pf, PUBLISHED_MCS[k]));
        if z > 3.0 || secs > 120.0 {
            bad.push(d);
        }
    }
    ensure(bad.is_empty(), format!("{}; out of band at D = {bad:?}", parts.join("; ")))?;
    Ok(parts.join("; "))
}

// ---------------------------------------------------------------- 2 and 3

struct Ex1Run {
    d: usize,
    seed: u64,
    pf: f64,
    n_s: usize,
    d_r: usize,
    converged: bool,
    secs: f64,
}

fn example1_runs() -> Result<Vec<Ex1Run>, String> {
    let mut out = Vec::new();
    for &d in &DIMS {
        let (m, s) = example1(d);
        for &seed in &SEEDS {
            // The criterion's own budget: N_s <= 250 and 10 minutes per run.
            let cfg = LearnerConfig {
                seed,
                max_iterations: 250 - LearnerConfig::default().n0,
                time_limit_secs: Some(600.0),
                ..LearnerConfig::default()
            };
            let t = Instant::now();
            let r = run(&m, &s, &cfg).map_err(|e| format!("D={d} seed={seed}: {e}"))?;
            let secs = t.elapsed().as_secs_f64();
            let rec = &r.record;
            eprintln!(
                "  example 1 D={d} seed={seed}: pf={:.4e} n_s={} d_r={:?} status={:?} {secs:.0}s",
                rec.pf.unwrap_or(f64::NAN),
                rec.n_s,
                rec.d_r,
                rec.status
            );
            out.push(Ex1Run {
                d,
                seed,
                pf: rec.pf.unwrap_or(f64::NAN),
                n_s: rec.n_s,
                d_r: rec.d_r.unwrap_or(0),
                converged: rec.status == RunStatus::Converged,
                secs,
            });
        }
    }
    Ok(out)
}

fn c2(runs: &[Ex1Run], reference: &[f64; 3]) -> Check {
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for (k, &d) in DIMS.iter().enumerate() {
        let rs: Vec<&Ex1Run> = runs.iter().filter(|r| r.d == d).collect();
        let errs: Vec<f64> = rs.iter().map(|r| ((r.pf - reference[k]) / reference[k]).abs()).collect();
        let med = median(errs);
        let max_ns = rs.iter().map(|r| r.n_s).max().unwrap_or(0);
        let max_t = rs.iter().map(|r| r.secs).fold(0.0, f64::max);
        let stopped = rs.iter().filter(|r| !r.converged).count();
        parts.push(format!(
            "D={d}: median eps_p {:.2}%, max N_s {max_ns}, max {max_t:.0}s, {stopped} budget stops",
            100.0 * med
        ));
        if !(med <= 0.15) || max_ns > 250 || max_t > 600.0 {
            bad.push(d);
        }
    }
    ensure(bad.is_empty(), format!("{}; out of band at D = {bad:?}", parts.join("; ")))?;
    Ok(parts.join("; "))
}

fn c3(runs: &[Ex1Run]) -> Check {
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for &d in &DIMS {
        let rs: Vec<&Ex1Run> = runs.iter().filter(|r| r.d == d).collect();
        let hits = rs.iter().filter(|r| r.d_r == 4).count();
        let list: Vec<String> = rs.iter().map(|r| format!("{}:{}", r.seed, r.d_r)).collect();
        parts.push(format!("D={d}: d_r=4 in {hits}/5 [{}]", list.join(" ")));
        if hits < 4 {
            bad.push(d);
        }
    }
    ensure(bad.is_empty(), parts.join("; "))?;
    Ok(parts.join("; "))
}

// ---------------------------------------------------------------- 4

fn c4() -> Check {
    let d = 100;
    let (m, s) = linear_benchmark(d);
    let x = sample(&s, 100, 11).map_err(|e| e.to_string())?;
    let mut g = DMatrix::zeros(100, d);
    for (i, row) in x.rows().enumerate() {
        let e = m.eval(row).map_err(|e| e.to_string())?;
        for j in 0..d {
            g[(i, j)] = e.grad[j];
        }
    }
    let eig = eigendecompose(&estimate_c(&g).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let w = eig.eigenvectors.column(0);
    let cos = (w.sum() / (d as f64).sqrt()).abs() / w.norm();
    ensure(cos >= 1.0 - 1e-10, format!("cosine {cos:.15}"))?;

    let cfg = LearnerConfig {
        seed: 1,
        d_max: Some(1),
        ..LearnerConfig::default()
    };
    let r = run(&m, &s, &cfg).map_err(|e| e.to_string())?;
    let pf = r.record.pf.unwrap();
    let exact = norm_cdf(-3.0);
    let rel = ((pf - exact) / exact).abs();
    ensure(
        r.record.d_r == Some(1) && rel <= 0.10,
        format!("cosine {cos:.15}; pf {pf:.4e} vs {exact:.4e} ({:.2}%)", 100.0 * rel),
    )?;
    Ok(format!(
        "|cos| = {cos:.15}; AaS-hGP pf {pf:.4e} vs Phi(-3) {exact:.4e} ({:.2}%), N_s {}",
        100.0 * rel,
        r.record.n_s
    ))
}

// ---------------------------------------------------------------- 5

fn c5() -> Check {
    let (m, s) = linear_benchmark(100);
    let r = form_hlrf(&m, &s, None, &FormOptions::default()).map_err(|e| e.to_string())?;
    let exact = norm_cdf(-3.0);
    let rel = ((r.pf - exact) / exact).abs();
    let msg = format!("beta {:.12}, pf rel err {rel:.2e}, {} iterations", r.beta, r.iterations);
    ensure((r.beta - 3.0).abs() <= 1e-6 && rel <= 1e-9, msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------- 6

const BAR: &str = "
    node 1 0 0 0
    node 2 120 0 0
    element 1 1 2
    support 1 xyz
    support 2 yz
    load 1 2 x 1
    monitor 2 x
";

fn truss_solver_checks() -> Result<(), String> {
    let bar = TrussModel::new(TrussGeometry::parse(BAR).map_err(|e| e.to_string())?);
    let (p, e, a) = (2500.0, 2.9e7, 0.75);
    let u = aashgp::models::Model::value(&bar, &[p, e, a]).map_err(|e| e.to_string())?;
    let want = p * 120.0 / (e * a);
    ensure((u - want).abs() <= 1e-15 * want, format!("single bar {u} vs PL/EA {want}"))?;

    let m = TrussModel::new(TrussGeometry::truss25());
    let x = TrussGeometry::truss25_inputs().map_err(|e| e.to_string())?.means();
    let u0 = m.displacements(&x).map_err(|e| e.to_string())?;
    let c = 3.0;
    let mut xs = x.clone();
    for v in &mut xs[7..] {
        *v *= c;
    }
    let u1 = m.displacements(&xs).map_err(|e| e.to_string())?;
    for (a, b) in u0.iter().zip(&u1) {
        ensure(
            (a / (c * c) - b).abs() <= 1e-12 * a.abs().max(1e-12),
            "E and A scaled by c must scale displacements by 1/c^2",
        )?;
    }
    Ok(())
}

fn c6() -> Check {
    truss_solver_checks()?;
    let m = ModelSpec::new(
        Box::new(TrussModel::new(TrussGeometry::truss25())),
        0.45,
        GradientMode::CentralDifference { step: 1e-5 },
    )
    .unwrap();
    let s = TrussGeometry::truss25_inputs().map_err(|e| e.to_string())?;
    let reference = mcs(&m, &s, 100_000, REFERENCE_SEED).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let cfg = LearnerConfig {
        seed: 1,
        max_iterations: 250 - LearnerConfig::default().n0,
        ..LearnerConfig::default()
    };
    let r = run(&m, &s, &cfg).map_err(|e| e.to_string())?;
    let pf = r.record.pf.unwrap();
    let rel = ((pf - reference.pf) / reference.pf).abs();
    let msg = format!(
        "solver checks ok; AaS-hGP pf {pf:.4e} (N_s {}, d_r {:?}, {:?}, {:.0}s) vs MCS 1e5 {:.4e} (c.o.v. {:.2}): {:.1}%",
        r.record.n_s,
        r.record.d_r,
        r.record.status,
        t.elapsed().as_secs_f64(),
        reference.pf,
        reference.cov,
        100.0 * rel
    );
    ensure(rel <= 0.20 && r.record.n_s <= 250, msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------- 7

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_params(rng: &mut ChaCha8Rng, d: usize, n: usize) -> HgpParams {
    HgpParams {
        log_var_f: rng.random_range(-0.5f64..0.5),
        log_ls_f: (0..d).map(|_| rng.random_range(-0.7f64..0.3)).collect(),
        log_var_g: rng.random_range(-1.0f64..0.5),
        log_ls_g: (0..d).map(|_| rng.random_range(-0.3f64..0.5)).collect(),
        mu0: rng.random_range(-2.5f64..-0.5),
        log_lambda: (0..n).map(|_| rng.random_range(-1.5f64..0.5)).collect(),
    }
}

fn mc_log_marginal(x: &DMatrix<f64>, y: &DVector<f64>, p: &HgpParams, samples: usize, seed: u64) -> (f64, f64) {
    let n = x.nrows();
    let kf = p.kernel_f().gram(x);
    let lg = p.kernel_g().gram(x).cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z = DVector::from_fn(n, |_, _| normal(&mut rng));
        let g = &lg * z;
        let mut a = kf.clone();
        for i in 0..n {
            a[(i, i)] += (p.mu0 + g[i]).exp();
        }
        let inv = a.clone().try_inverse().unwrap();
        logs.push(
            -0.5 * y.dot(&(&inv * y)) - 0.5 * a.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln(),
        );
    }
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
    let mean = w.iter().sum::<f64>() / samples as f64;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    (mx + mean.ln(), (var / samples as f64).sqrt() / mean)
}

fn c7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Analytic gradient against central differences.
    let mut worst: f64 = 0.0;
    for &(n, d) in &[(5, 1), (10, 2), (20, 3)] {
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0f64..1.0));
        let y = DVector::from_fn(n, |i, _| (2.0 * x[(i, 0)]).sin() + 0.2 * normal(&mut rng));
        let theta = random_params(&mut rng, d, n).to_vec();
        let (_, g) = bound_and_grad(&x, &y, &theta).map_err(|e| e.to_string())?;
        for k in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let fd = (bound_and_grad(&x, &y, &tp).unwrap().0 - bound_and_grad(&x, &y, &tm).unwrap().0) / (2.0 * h);
            let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-4, format!("gradient relative error {worst:.2e}"))?;

    // KL vanishes when the variational posterior equals the prior.
    let x = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0f64..1.0));
    let p = random_params(&mut rng, 2, 6);
    let k = p.kernel_g().gram(&x);
    let mu = DVector::from_element(6, p.mu0);
    let kl = gaussian_kl(&mu, &k, &mu, &k).map_err(|e| e.to_string())?;
    ensure(kl.abs() <= 1e-12, format!("KL at prior {kl:e}"))?;

    // Bound below a Monte Carlo estimate of the exact marginal likelihood.
    let mut gaps = Vec::new();
    for case in 0..4u64 {
        let n = 3 + (case % 2) as usize;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0f64..1.0));
        let y = DVector::from_fn(n, |_, _| normal(&mut rng));
        let p = random_params(&mut rng, 1, n);
        let b = bound_terms(&x, &y, &p).map_err(|e| e.to_string())?.total();
        let (mc, se) = mc_log_marginal(&x, &y, &p, 100_000, 500 + case);
        ensure(b <= mc + 3.0 * se, format!("case {case}: bound {b} > MC {mc} +- {se}"))?;
        gaps.push(mc - b);
    }

    // Homoscedastic limit: a flat, tiny-variance noise GP.
    let (n, d) = (20, 2);
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0f64..2.0));
    let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] * x[(i, 1)] + 0.1 * normal(&mut rng)).collect();
    let mu0 = 0.05f64.ln();
    let p = HgpParams {
        log_var_f: 0.3,
        log_ls_f: vec![-0.2; d],
        log_var_g: 1e-14f64.ln(),
        log_ls_g: vec![0.0; d],
        mu0,
        log_lambda: vec![0.5f64.ln(); n],
    };
    let hgp = HgpModel::from_params(&x, &y, p.clone(), false).map_err(|e| e.to_string())?;
    let gp = GpModel::new(&x, &y, p.kernel_f(), mu0.exp(), false).map_err(|e| e.to_string())?;
    let mut dev: f64 = 0.0;
    for _ in 0..50 {
        let q = [rng.random_range(-2.5f64..2.5), rng.random_range(-2.5f64..2.5)];
        let (a, b) = (hgp.predict(&q), gp.predict(&q));
        dev = dev.max((a.mean - b.mean).abs()).max((a.latent_variance - b.variance).abs());
    }
    ensure(dev <= 1e-6, format!("homoscedastic limit deviation {dev:e}"))?;
    Ok(format!(
        "grad rel err {worst:.1e}; KL at prior {kl:.1e}; MC minus bound {:?}; limit dev {dev:.1e}",
        gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>()
    ))
}

// ---------------------------------------------------------------- 8

fn c8() -> Check {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // n = 1. The Gram diagonal carries the relative jitter.
    let mut worst1: f64 = 0.0;
    for _ in 0..20 {
        let sf = rng.random_range(0.2f64..3.0);
        let ell = rng.random_range(0.3f64..2.0);
        let sn = rng.random_range(0.0f64..0.5);
        let (x1, y1) = (rng.random_range(-1.0f64..1.0), rng.random_range(-2.0f64..2.0));
        let xs = rng.random_range(-2.0f64..2.0);
        let x = DMatrix::from_element(1, 1, x1);
        let gp = GpModel::new(&x, &[y1], SeArdKernel::new(sf, vec![ell]).unwrap(), sn, false)
            .map_err(|e| e.to_string())?;
        let s = sf * (1.0 + JITTER) + sn;
        let ks = sf * (-0.5 * ((xs - x1) / ell).powi(2)).exp();
        let lml = -y1 * y1 / (2.0 * s) - 0.5 * s.ln() - 0.5 * ln2pi;
        let mean = ks * y1 / s;
        let var = sf - ks * ks / s;
        let p = gp.predict(&[xs]);
        worst1 = worst1
            .max((gp.log_marginal() - lml).abs())
            .max((p.mean - mean).abs())
            .max((p.variance - var).abs());
    }
    ensure(worst1 <= 1e-12, format!("n = 1 deviation {worst1:e}"))?;

    // Dense inverse and determinant for n <= 5.
    let mut worst: f64 = 0.0;
    for n in 1..=5 {
        for _ in 0..10 {
            let d = 2;
            let sf = rng.random_range(0.3f64..2.0);
            let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.4f64..1.5)).collect();
            let sn = rng.random_range(0.01f64..0.3);
            let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0f64..1.0));
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0f64..1.0)).collect();
            let kern = SeArdKernel::new(sf, ls.clone()).unwrap();
            let gp = GpModel::new(&x, &y, kern, sn, false).map_err(|e| e.to_string())?;
            let k = |a: &[f64], b: &[f64]| {
                sf * (-0.5 * a.iter().zip(b).zip(&ls).map(|((u, v), l)| ((u - v) / l).powi(2)).sum::<f64>()).exp()
            };
            let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
            let mut a = DMatrix::from_fn(n, n, |i, j| k(&rows[i], &rows[j]));
            for i in 0..n {
                a[(i, i)] += sf * JITTER + sn;
            }
            let inv = a.clone().try_inverse().unwrap();
            let yv = DVector::from_vec(y.clone());
            let lml = -0.5 * yv.dot(&(&inv * &yv)) - 0.5 * a.determinant().ln() - 0.5 * n as f64 * ln2pi;
            worst = worst.max((gp.log_marginal() - lml).abs());
            for _ in 0..5 {
                let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5f64..1.5)).collect();
                let ks = DVector::from_fn(n, |i, _| k(&rows[i], &q));
                let mean = ks.dot(&(&inv * &yv));
                let var = (sf - ks.dot(&(&inv * &ks))).max(0.0);
                let p = gp.predict(&q);
                worst = worst.max((p.mean - mean).abs()).max((p.variance - var).abs());
            }
            // The gradient-bearing likelihood routine agrees with the model.
            let mut theta = vec![sf.ln()];
            theta.extend(ls.iter().map(|l| l.ln()));
            theta.push(sn.ln());
            let (v, _) = log_marginal_and_grad(&x, &yv, &theta).map_err(|e| e.to_string())?;
            worst = worst.max((v - lml).abs());
        }
    }
    ensure(worst <= 1e-8, format!("dense oracle deviation {worst:e}"))?;
    Ok(format!("n = 1 closed forms within {worst1:.1e}; dense oracle n <= 5 within {worst:.1e}"))
}

// ---------------------------------------------------------------- 9

fn c9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for inst in 0..200 {
        let d = 1 + inst % 3;
        let np = 5 + rng.random_range(0..40usize);
        let nt = 1 + rng.random_range(0..12usize);
        // Coarse grid values make exact distance ties common.
        let grid = |rng: &mut ChaCha8Rng| (rng.random_range(-4..=4) as f64) * 0.25;
        let pool = DMatrix::from_fn(np, d, |_, _| grid(&mut rng));
        let train = DMatrix::from_fn(nt, d, |_, _| grid(&mut rng));
        let critical: Vec<usize> = (0..np).filter(|_| rng.random_bool(0.4)).collect();
        let scores: Vec<f64> = (0..np).map(|_| rng.random_range(0.0f64..5.0)).collect();
        let got = select_next(&critical, &pool, &train, &scores).map_err(|e| e.to_string())?;

        let want = if critical.is_empty() {
            let mut b = 0;
            for k in 0..np {
                if scores[k] < scores[b] {
                    b = k;
                }
            }
            b
        } else {
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for k in 0..np {
                if !critical.contains(&k) {
                    continue;
                }
                let mut dmin = f64::INFINITY;
                for i in 0..nt {
                    let s: f64 = (0..d).map(|c| (pool[(k, c)] - train[(i, c)]).powi(2)).sum();
                    dmin = dmin.min(s);
                }
                if dmin > best.1 {
                    best = (k, dmin);
                }
            }
            best.0
        };
        ensure(got.index == want, format!("instance {inst}: selected {} vs exhaustive {want}", got.index))?;
    }

    for inst in 0..200 {
        let n = rng.random_range(1..60usize);
        let means: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0f64..3.0)).collect();
        let stds: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0f64..2.0) })
            .collect();
        let y_f = rng.random_range(-1.0f64..1.0);
        let eps_c = rng.random_range(0.5f64..3.0);
        let floor = 1e-12;
        let want: Vec<usize> = (0..n)
            .filter(|&k| (y_f - means[k]).abs() <= eps_c * stds[k].max(floor))
            .collect();
        let got = critical_set(&means, &stds, y_f, eps_c, floor);
        ensure(got == want, format!("critical set instance {inst}: {got:?} vs {want:?}"))?;
    }
    Ok("max-min selection = exhaustive search on 200 instances; critical set = enumeration on 200".into())
}

// ---------------------------------------------------------------- 10

fn c10() -> Check {
    // Population estimate against a plain indicator count.
    let (m, s) = example1(6);
    let cfg = LearnerConfig {
        n0: 20,
        pool_size: 25_000,
        candidate_pool_size: 500,
        restarts: 2,
        max_iterations: 3,
        seed: 4,
        ..LearnerConfig::default()
    };
    let out: RunOutcome = run(&m, &s, &cfg).map_err(|e| e.to_string())?;
    let map = &out.record.input_map;
    let est = population_pf(&s, cfg.seed, cfg.pool_size, map, &out.projection, &out.model, m.threshold);
    let mut count = 0usize;
    let mut means = Vec::new();
    let mut buf = SampleMatrix::zeros(0, 6);
    for b in 0..population_blocks(cfg.pool_size) {
        let rows = population_block(&s, cfg.seed, b, cfg.pool_size, &mut buf);
        for x in buf.rows().take(rows) {
            let z: Vec<f64> = x.iter().zip(&map.shift).zip(&map.scale).map(|((v, a), c)| (v - a) / c).collect();
            let w = out.projection.w_r();
            let psi: Vec<f64> = (0..w.ncols()).map(|c| (0..6).map(|j| z[j] * w[(j, c)]).sum()).collect();
            let mu = out.model.predict(&psi).mean;
            means.push(mu);
            if mu >= m.threshold {
                count += 1;
            }
        }
    }
    let oracle = count as f64 / cfg.pool_size as f64;
    ensure(est == oracle, format!("population estimate {est} vs indicator count {oracle}"))?;
    ensure(estimate_pf(&means, m.threshold).unwrap() == oracle, "estimate_pf disagrees with the count")?;

    // Convergence arithmetic.
    let st = check_convergence(&[1.0e-3, 1.1e-3], 1e-3, 1e-3);
    let e1 = st.eps1.unwrap();
    ensure((e1 - 1.0 / 11.0).abs() <= 1e-15, format!("eps1 {e1}"))?;
    let z = check_convergence(&[1e-3, 1.2e-3, 0.0], 1e-3, 1e-3);
    ensure(z.eps1 == Some(f64::INFINITY) && !z.converged, "P = 0 must give eps1 = inf without converging")?;
    let zz = check_convergence(&[0.0, 0.0, 0.0], 1e-3, 1e-3);
    ensure(!zz.converged, "an all-zero history must not converge")?;
    Ok(format!(
        "population estimate {est:.6e} = indicator count ({count} of {}); eps1(1.0e-3, 1.1e-3) = {e1:.10}; P = 0 guarded",
        cfg.pool_size
    ))
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let started = Instant::now();
    let mut reference = [f64::NAN; 3];
    let mut results: Vec<(u8, &str, Check)> = Vec::new();
    results.push((1, "reference MCS, example 1", guarded(|| c1(&mut reference))));
    let runs = match catch_unwind(example1_runs) {
        Ok(r) => r,
        Err(_) => Err("example 1 runs panicked".to_string()),
    };
    let (r2, r3) = match &runs {
        Ok(rs) => (guarded(|| c2(rs, &reference)), guarded(|| c3(rs))),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    results.push((2, "AaS-hGP accuracy and efficiency, example 1", r2));
    results.push((3, "dimension identification, example 1", r3));
    results.push((4, "exact-feature recovery, linear benchmark", guarded(c4)));
    results.push((5, "FORM exactness, linear benchmark", guarded(c5)));
    results.push((6, "truss self-consistency", guarded(c6)));
    results.push((7, "hGP correctness", guarded(c7)));
    results.push((8, "homoscedastic GP exactness", guarded(c8)));
    results.push((9, "acquisition oracles", guarded(c9)));
    results.push((10, "estimator and convergence units", guarded(c10)));

    println!();
    let mut failed = 0;
    for (id, name, r) in &results {
        match r {
            Ok(msg) => println!("PASS criterion {id:>2} ({name}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({name}): {msg}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.0}s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
