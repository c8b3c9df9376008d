//! Adaptive learning loop: initial design, active subspace and dimension
//! selection, hGP fit, surrogate failure probability, convergence check,
//! and acquisition of the next model evaluation.

pub mod acquisition;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{HgpConfig, HgpModel, HgpParams};
use crate::models::ModelSpec;
use crate::rv::{norm_ppf, population_block, population_blocks, stream_rng, RandomVectorSpec, SampleMatrix, Stream};
use crate::subspace::{default_target, eigendecompose, estimate_c, select_dimension, HgpFitter, SubspaceProjection};

pub use acquisition::{
    check_convergence, critical_set, estimate_pf, learning_score, select_next, ConvergenceStatus, Selection,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerMode {
    Adaptive,
    /// One fit on the initial design and one estimate.
    GlobalDoe,
}

/// Map applied to inputs (and, by the chain rule, gradients) before the
/// active subspace is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// `z_j = (x_j − mean_j) / std_j` from the marginals.
    Standardize,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Initial design size n₀.
    pub n0: usize,
    /// Population size N for the surrogate failure probability.
    pub pool_size: usize,
    /// Fresh candidates drawn per iteration for acquisition.
    pub candidate_pool_size: usize,
    pub eps_c: f64,
    pub eps1_tol: f64,
    pub eps2_tol: f64,
    /// Absolute RMSE target for dimension selection; overrides the relative one.
    pub eps_d_target: Option<f64>,
    /// Relative target: `eps_d_relative · std(y)` over the training set.
    pub eps_d_relative: f64,
    /// Cap on the reduced dimension; defaults to `min(D, 10)`.
    pub d_max: Option<usize>,
    pub max_iterations: usize,
    pub seed: u64,
    pub mode: LearnerMode,
    pub input_scaling: InputScaling,
    /// hGP multi-start count.
    pub restarts: usize,
    pub sigma_floor: f64,
    /// Wall-clock budget in seconds, checked once per iteration. Unset by
    /// default; when set, results depend on machine speed.
    pub time_limit_secs: Option<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            n0: 50,
            pool_size: 1_000_000,
            candidate_pool_size: 10_000,
            eps_c: 2.0,
            eps1_tol: 1e-3,
            eps2_tol: 1e-3,
            eps_d_target: None,
            eps_d_relative: 0.05,
            d_max: None,
            max_iterations: 300,
            seed: 0,
            mode: LearnerMode::Adaptive,
            input_scaling: InputScaling::Standardize,
            restarts: 5,
            sigma_floor: 1e-12,
            time_limit_secs: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n0 < 3 {
            return bad(format!("n0 must be >= 3, got {}", self.n0));
        }
        if self.pool_size == 0 || self.candidate_pool_size == 0 {
            return bad("pool_size and candidate_pool_size must be >= 1".into());
        }
        if self.n0 * 100 > self.pool_size {
            return bad(format!(
                "n0 <= pool_size / 100 is required (n0 = {}, pool_size = {})",
                self.n0, self.pool_size
            ));
        }
        if !(self.eps_c > 0.0) {
            return bad(format!("eps_c must be > 0, got {}", self.eps_c));
        }
        if !(self.eps1_tol > 0.0) || !(self.eps2_tol > 0.0) {
            return bad("eps1_tol and eps2_tol must be > 0".into());
        }
        if let Some(t) = self.eps_d_target {
            if !(t > 0.0) {
                return bad(format!("eps_d_target must be > 0, got {t}"));
            }
        }
        if !(self.eps_d_relative > 0.0) {
            return bad(format!("eps_d_relative must be > 0, got {}", self.eps_d_relative));
        }
        if self.d_max == Some(0) {
            return bad("d_max must be >= 1".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1".into());
        }
        if !(self.sigma_floor > 0.0) {
            return bad("sigma_floor must be > 0".into());
        }
        if let Some(t) = self.time_limit_secs {
            if !(t > 0.0) {
                return bad(format!("time_limit_secs must be > 0, got {t}"));
            }
        }
        Ok(())
    }

    fn single_pass(&self) -> bool {
        self.mode == LearnerMode::GlobalDoe || self.max_iterations == 0
    }
}

/// Evaluated design points in natural units.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64, grad: Vec<f64>) {
        self.inputs.push(x);
        self.y.push(y);
        self.grads.push(grad);
    }
}

/// Affine input map used for the subspace: `z = (x − shift) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputMap {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputMap {
    pub fn new(spec: &RandomVectorSpec, scaling: InputScaling) -> Self {
        match scaling {
            InputScaling::Standardize => InputMap {
                shift: spec.means(),
                scale: spec.stds().into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect(),
            },
            InputScaling::None => InputMap {
                shift: vec![0.0; spec.dim()],
                scale: vec![1.0; spec.dim()],
            },
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.shift[j]) / self.scale[j];
        }
    }

    pub fn inputs(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.shift.len(), |i, j| (rows[i][j] - self.shift[j]) / self.scale[j])
    }

    /// `∂y/∂z = scale · ∂y/∂x`.
    pub fn gradients(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.shift.len(), |i, j| rows[i][j] * self.scale[j])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub pf: f64,
    /// Infinite values serialize as null.
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub d_r: usize,
    pub d_converged: bool,
    pub eps_d: Vec<f64>,
    pub eps_d_target: f64,
    pub eigenvalues: Vec<f64>,
    pub spectral_gap: Option<f64>,
    pub bound: f64,
    pub n_s: usize,
    pub critical_size: Option<usize>,
    pub selected: Option<usize>,
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    /// Stopped on `time_limit_secs`.
    TimeLimit,
    SinglePass,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub status: RunStatus,
    pub iterations: Vec<IterationRecord>,
    pub n_s: usize,
    pub n_g: usize,
    pub pf: Option<f64>,
    pub beta_g: Option<f64>,
    pub d_r: Option<usize>,
    pub hgp_params: Option<HgpParams>,
    pub input_map: InputMap,
}

impl RunRecord {
    pub fn pf_history(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.pf).collect()
    }
}

/// Everything produced by a finished run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub training: TrainingSet,
    pub projection: SubspaceProjection,
    pub model: HgpModel,
    /// Candidate inputs of the last acquisition step, if any.
    pub last_candidates: Option<SampleMatrix>,
}

impl RunOutcome {
    /// Features of arbitrary natural-unit inputs under the final projection.
    pub fn features(&self, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.projection.project(&self.record.input_map.inputs(rows))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunError {
    #[source]
    pub error: Error,
    pub record: Box<RunRecord>,
}

/// `−Φ⁻¹(pf)`.
pub fn generalized_beta(pf: f64) -> f64 {
    -norm_ppf(pf)
}

fn fail(error: Error, mut record: RunRecord) -> RunError {
    record.status = RunStatus::Failed;
    RunError {
        error,
        record: Box::new(record),
    }
}

/// Surrogate failure probability over the fixed population, regenerated
/// block by block from its streams.
pub fn population_pf(
    spec: &RandomVectorSpec,
    seed: u64,
    n: usize,
    map: &InputMap,
    projection: &SubspaceProjection,
    model: &HgpModel,
    y_f: f64,
) -> f64 {
    let d = spec.dim();
    let mut buf = SampleMatrix::zeros(0, d);
    let mut z = vec![0.0; d];
    let mut psi = vec![0.0; projection.d_r];
    let mut count = 0usize;
    for b in 0..population_blocks(n) {
        let rows = population_block(spec, seed, b, n, &mut buf);
        for x in buf.rows().take(rows) {
            map.apply(x, &mut z);
            projection.project_point(&z, &mut psi);
            if model.predict_mean(&psi) >= y_f {
                count += 1;
            }
        }
    }
    count as f64 / n as f64
}

/// Runs the adaptive loop until convergence or the iteration budget.
pub fn run(model: &ModelSpec, spec: &RandomVectorSpec, cfg: &LearnerConfig) -> std::result::Result<RunOutcome, RunError> {
    let map = InputMap::new(spec, cfg.input_scaling);
    let mut record = RunRecord {
        seed: cfg.seed,
        status: RunStatus::Failed,
        iterations: Vec::new(),
        n_s: 0,
        n_g: 0,
        pf: None,
        beta_g: None,
        d_r: None,
        hgp_params: None,
        input_map: map.clone(),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, record));
    }
    let dim = spec.dim();
    if model.dimension() != dim {
        let e = Error::DimensionMismatch {
            context: "model vs random vector",
            expected: dim,
            got: model.dimension(),
        };
        return Err(fail(e, record));
    }
    let started = std::time::Instant::now();
    let d_max = cfg.d_max.unwrap_or(10).min(dim);
    let y_f = model.threshold;

    // Step 1: initial design.
    let mut training = TrainingSet::default();
    let doe = spec.sample_with(&mut stream_rng(cfg.seed, Stream::InitialDoe), cfg.n0);
    for (i, x) in doe.rows().enumerate() {
        match model.eval(x) {
            Ok(e) => {
                record.n_s += 1;
                record.n_g += 1;
                training.push(x.to_vec(), e.y, e.grad);
            }
            Err(e) => {
                return Err(fail(
                    Error::Sample {
                        index: i,
                        source: Box::new(e),
                    }
                    .context("initial design"),
                    record,
                ))
            }
        }
    }

    let mut fitter = HgpFitter::new(HgpConfig {
        restarts: cfg.restarts,
        ..HgpConfig::default()
    });
    let mut history: Vec<f64> = Vec::new();
    let mut last_candidates = None;
    let mut iteration = 0usize;

    loop {
        // Step 2: active subspace, dimension selection and hGP fit.
        let z = map.inputs(&training.inputs);
        let gz = map.gradients(&training.grads);
        let eig = match estimate_c(&gz).and_then(|c| eigendecompose(&c)) {
            Ok(e) => e,
            Err(e) => return Err(fail(e.context(format!("iteration {iteration}: active subspace")), record)),
        };
        let target = cfg
            .eps_d_target
            .unwrap_or_else(|| default_target(&training.y, cfg.eps_d_relative))
            .max(f64::MIN_POSITIVE);
        let sel = match select_dimension(&z, &training.y, &eig, target, d_max, &mut fitter) {
            Ok(s) => s,
            Err(e) => return Err(fail(e.context(format!("iteration {iteration}")), record)),
        };
        let hgp = sel.model.model;

        // Step 3: surrogate failure probability.
        let pf = population_pf(spec, cfg.seed, cfg.pool_size, &map, &sel.projection, &hgp, y_f);
        history.push(pf);
        let status = check_convergence(&history, cfg.eps1_tol, cfg.eps2_tol);

        let mut it = IterationRecord {
            iteration,
            pf,
            eps1: status.eps1,
            eps2: status.eps2,
            d_r: sel.d_r,
            d_converged: sel.converged,
            eps_d: sel.eps_trace.iter().map(|&(_, e)| e).collect(),
            eps_d_target: target,
            eigenvalues: eig.eigenvalues.clone(),
            spectral_gap: sel.projection.spectral_gap(),
            bound: hgp.bound(),
            n_s: record.n_s,
            critical_size: None,
            selected: None,
            fallback: false,
        };
        log::info!(
            "iter {iteration}: pf={pf:.4e} d_r={} eps1={:?} eps2={:?} n_s={}",
            sel.d_r,
            status.eps1,
            status.eps2,
            record.n_s
        );
        record.pf = Some(pf);
        record.beta_g = Some(generalized_beta(pf));
        record.d_r = Some(sel.d_r);
        record.hgp_params = Some(hgp.params().clone());

        // Step 4: stopping rules.
        let stop = if cfg.single_pass() {
            Some(RunStatus::SinglePass)
        } else if status.converged {
            Some(RunStatus::Converged)
        } else if iteration >= cfg.max_iterations {
            Some(RunStatus::MaxIterations)
        } else if cfg.time_limit_secs.is_some_and(|t| started.elapsed().as_secs_f64() >= t) {
            Some(RunStatus::TimeLimit)
        } else {
            None
        };
        if let Some(s) = stop {
            record.iterations.push(it);
            record.status = s;
            return Ok(RunOutcome {
                record,
                training,
                projection: sel.projection,
                model: hgp,
                last_candidates,
            });
        }

        // Step 5: fresh candidates, critical set, max-min selection.
        let cands = spec.sample_with(
            &mut stream_rng(cfg.seed, Stream::Candidates { iteration: iteration as u64 }),
            cfg.candidate_pool_size,
        );
        let cz = DMatrix::from_fn(cands.nrows(), dim, |i, j| (cands.row(i)[j] - map.shift[j]) / map.scale[j]);
        let cpsi = match sel.projection.project(&cz) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, record)),
        };
        let mut means = Vec::with_capacity(cands.nrows());
        let mut stds = Vec::with_capacity(cands.nrows());
        let mut row = vec![0.0; sel.d_r];
        for i in 0..cands.nrows() {
            for (c, r) in row.iter_mut().enumerate() {
                *r = cpsi[(i, c)];
            }
            let p = hgp.predict(&row);
            means.push(p.mean);
            stds.push(p.std());
        }
        let critical = critical_set(&means, &stds, y_f, cfg.eps_c, cfg.sigma_floor);
        let scores: Vec<f64> = means
            .iter()
            .zip(&stds)
            .map(|(&m, &s)| learning_score(m, s, y_f, cfg.sigma_floor))
            .collect();
        let pick = match select_next(&critical, &cpsi, &sel.features, &scores) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, record)),
        };
        it.critical_size = Some(critical.len());
        it.selected = Some(pick.index);
        it.fallback = pick.fallback;
        record.iterations.push(it);

        let x_new = cands.row(pick.index).to_vec();
        match model.eval(&x_new) {
            Ok(e) => {
                record.n_s += 1;
                record.n_g += 1;
                training.push(x_new, e.y, e.grad);
            }
            Err(e) => {
                return Err(fail(
                    e.context(format!("iteration {iteration}: evaluating the selected candidate")),
                    record,
                ))
            }
        }
        last_candidates = Some(cands);
        iteration += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(LearnerConfig::default().validate().is_ok());
        let c = LearnerConfig {
            n0: 200,
            pool_size: 10_000,
            ..Default::default()
        };
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("n0 <= pool_size / 100"), "{e}");
        let c = LearnerConfig {
            eps_c: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = LearnerConfig {
            time_limit_secs: Some(0.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn time_limit_stops_after_first_fit() {
        let spec = RandomVectorSpec::iid(crate::rv::MarginalSpec::gaussian(0.0, 1.0).unwrap(), 3).unwrap();
        let model = ModelSpec::new(
            Box::new(crate::models::LinearModel::negated(2.0, 3)),
            0.0,
            crate::models::GradientMode::Analytic,
        )
        .unwrap();
        let cfg = LearnerConfig {
            n0: 10,
            pool_size: 2_000,
            candidate_pool_size: 200,
            restarts: 1,
            time_limit_secs: Some(1e-9),
            ..Default::default()
        };
        let out = run(&model, &spec, &cfg).unwrap();
        assert_eq!(out.record.status, RunStatus::TimeLimit);
        assert_eq!(out.record.iterations.len(), 1);
        assert_eq!(out.record.n_s, 10);
    }

    #[test]
    fn input_map_chain_rule() {
        let spec = RandomVectorSpec::new(vec![
            crate::rv::MarginalSpec::gaussian(10.0, 2.0).unwrap(),
            crate::rv::MarginalSpec::uniform(0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let m = InputMap::new(&spec, InputScaling::Standardize);
        let z = m.inputs(&[vec![12.0, 0.5]]);
        assert!((z[(0, 0)] - 1.0).abs() < 1e-15 && z[(0, 1)].abs() < 1e-15);
        let g = m.gradients(&[vec![1.0, 1.0]]);
        assert!((g[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((g[(0, 1)] - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
