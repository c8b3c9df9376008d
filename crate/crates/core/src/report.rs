//! Run reports: `report.json` with one entry per method, the CSV traces
//! and the comparison table against a reference failure probability.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{FormResult, McsResult};
use crate::error::{Error, Result};
use crate::learner::{generalized_beta, RunOutcome, RunRecord, RunStatus};

/// Number of eigenvalue columns in `history.csv`.
pub const HISTORY_EIGENVALUES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AasHgp,
    Mcs,
    Form,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::AasHgp => "aas_hgp",
            Method::Mcs => "mcs",
            Method::Form => "form",
        }
    }
}

/// Common fields for every method; method-specific output sits in `details`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub pf: Option<f64>,
    pub beta_g: Option<f64>,
    /// Model evaluations and gradient evaluations.
    pub n_s: usize,
    pub n_g: usize,
    pub d_r: Option<usize>,
    pub status: String,
    pub seed: Option<u64>,
    pub details: serde_json::Value,
}

impl MethodReport {
    pub fn from_run(record: &RunRecord) -> Result<Self> {
        let status = match record.status {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max_iterations",
            RunStatus::TimeLimit => "time_limit",
            RunStatus::SinglePass => "single_pass",
            RunStatus::Failed => "failed",
        };
        Ok(MethodReport {
            method: Method::AasHgp,
            pf: record.pf,
            beta_g: record.beta_g,
            n_s: record.n_s,
            n_g: record.n_g,
            d_r: record.d_r,
            status: status.into(),
            seed: Some(record.seed),
            details: serde_json::to_value(record)?,
        })
    }

    pub fn from_mcs(r: &McsResult) -> Result<Self> {
        Ok(MethodReport {
            method: Method::Mcs,
            pf: Some(r.pf),
            beta_g: Some(generalized_beta(r.pf)).filter(|b| b.is_finite()),
            n_s: r.n,
            n_g: 0,
            d_r: None,
            status: "complete".into(),
            seed: Some(r.seed),
            details: serde_json::to_value(r)?,
        })
    }

    pub fn from_form(r: &FormResult) -> Result<Self> {
        Ok(MethodReport {
            method: Method::Form,
            pf: Some(r.pf),
            beta_g: Some(r.beta),
            n_s: r.n_s,
            n_g: r.n_g,
            d_r: None,
            status: if r.converged { "converged" } else { "max_iterations" }.into(),
            seed: None,
            details: serde_json::to_value(r)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub model: String,
    pub dimension: usize,
    pub threshold: f64,
    pub methods: Vec<MethodReport>,
    /// The configuration that produced the report.
    pub config: serde_json::Value,
}

impl Report {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::from(e).context(path.display().to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))
    }
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:e}"),
        Some(x) if x.is_nan() => String::new(),
        Some(x) => if x > 0.0 { "inf" } else { "-inf" }.into(),
        None => String::new(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::from(e).context(path.display().to_string()))
}

/// `iteration, pf, eps1, eps2, d_r, lambda_1..lambda_8, n_s`.
pub fn write_history_csv(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    let mut header: Vec<String> = ["iteration", "pf", "eps1", "eps2", "d_r"].map(String::from).to_vec();
    header.extend((1..=HISTORY_EIGENVALUES).map(|k| format!("lambda_{k}")));
    header.push("n_s".into());
    w.write_record(&header)?;
    for r in &record.iterations {
        let mut row = vec![
            r.iteration.to_string(),
            format!("{:e}", r.pf),
            opt(r.eps1),
            opt(r.eps2),
            r.d_r.to_string(),
        ];
        row.extend((0..HISTORY_EIGENVALUES).map(|k| opt(r.eigenvalues.get(k).copied())));
        row.push(r.n_s.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `iteration, k, eigenvalue, eps_d`; `eps_d` is the in-sample RMSE with
/// `d_r = k` when that dimension was tried.
pub fn write_spectrum_csv(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["iteration", "k", "eigenvalue", "eps_d"])?;
    for r in &record.iterations {
        for (k, lam) in r.eigenvalues.iter().enumerate() {
            w.write_record([
                r.iteration.to_string(),
                (k + 1).to_string(),
                format!("{lam:e}"),
                opt(r.eps_d.get(k).copied()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `psi_1..psi_dr, y_pred, y_true_if_known, label`: the training features
/// (`training` or `training_failure`) followed by the last candidate pool
/// (`candidate`).
pub fn write_features_csv(path: impl AsRef<Path>, outcome: &RunOutcome, y_f: f64) -> Result<()> {
    let d_r = outcome.projection.d_r;
    let mut w = writer(path.as_ref())?;
    let mut header: Vec<String> = (1..=d_r).map(|k| format!("psi_{k}")).collect();
    header.extend(["y_pred", "y_true_if_known", "label"].map(String::from));
    w.write_record(&header)?;

    let mut emit = |psi: &[f64], y: Option<f64>, label: &str| -> Result<()> {
        let mut row: Vec<String> = psi.iter().map(|v| format!("{v:e}")).collect();
        row.push(format!("{:e}", outcome.model.predict_mean(psi)));
        row.push(opt(y));
        row.push(label.into());
        w.write_record(&row)?;
        Ok(())
    };
    let train = outcome.features(&outcome.training.inputs)?;
    for (i, y) in outcome.training.y.iter().enumerate() {
        let psi: Vec<f64> = train.row(i).iter().copied().collect();
        let label = if *y >= y_f { "training_failure" } else { "training" };
        emit(&psi, Some(*y), label)?;
    }
    if let Some(c) = &outcome.last_candidates {
        let rows: Vec<Vec<f64>> = c.rows().map(|r| r.to_vec()).collect();
        let feats = outcome.features(&rows)?;
        for i in 0..feats.nrows() {
            let psi: Vec<f64> = feats.row(i).iter().copied().collect();
            emit(&psi, None, "candidate")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub pf: Option<f64>,
    /// `|pf − pf_ref| / pf_ref`.
    pub eps_p: Option<f64>,
    pub beta_g: Option<f64>,
    pub n_s: usize,
    pub d_r: Option<usize>,
}

/// One row per method, relative errors against `reference` when given.
/// A missing reliability index is filled with `−Φ⁻¹(pf)`.
pub fn comparison(methods: &[MethodReport], reference: Option<f64>) -> Vec<ComparisonRow> {
    methods
        .iter()
        .map(|m| ComparisonRow {
            method: m.method.label().into(),
            pf: m.pf,
            eps_p: match (m.pf, reference) {
                (Some(p), Some(r)) if r != 0.0 => Some(((p - r) / r).abs()),
                _ => None,
            },
            beta_g: m
                .beta_g
                .or_else(|| m.pf.map(generalized_beta))
                .filter(|b| b.is_finite()),
            n_s: m.n_s,
            d_r: m.d_r,
        })
        .collect()
}

pub fn write_comparison_csv(path: impl AsRef<Path>, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["method", "pf", "eps_p", "beta_g", "n_s", "d_r"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            opt(r.pf),
            opt(r.eps_p),
            opt(r.beta_g),
            r.n_s.to_string(),
            r.d_r.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let cell = |v: Option<f64>, p: usize| match v {
        Some(x) if x.is_finite() => format!("{x:.p$e}"),
        _ => "-".into(),
    };
    let mut s = String::from("| method | Pf | eps_p | beta_g | N_s | d_r |\n|---|---|---|---|---|---|\n");
    for r in rows {
        s += &format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.method,
            cell(r.pf, 3),
            r.eps_p.map(|e| format!("{:.2}%", 100.0 * e)).unwrap_or_else(|| "-".into()),
            r.beta_g.filter(|b| b.is_finite()).map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into()),
            r.n_s,
            r.d_r.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
        );
    }
    s
}
