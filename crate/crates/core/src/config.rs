//! Experiment configuration: one JSON document per run.
//!
//! ```json
//! {
//!   "name": "example1_d30",
//!   "model": { "name": "product", "dimension": 30, "threshold": 0.65, "negate": true },
//!   "rv": { "iid": { "kind": "uniform", "p1": 0.0, "p2": 1.0 } },
//!   "learner": { "seed": 1 },
//!   "baselines": { "mcs_n": 1000000, "form": true },
//!   "output": { "directory": "runs/example1_d30" }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::models::{GradientMode, LinearModel, Model, ModelSpec, ProductModel, TrussGeometry, TrussModel};
use crate::rv::{MarginalSpec, RandomVectorSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBlock {
    /// `±∏ (4x_j − 2 + λ_j) / (1 + λ_j)`.
    Product {
        dimension: usize,
        threshold: f64,
        /// Explicit weights; default is 1 for the first `effective` inputs
        /// and 500 for the rest.
        #[serde(default)]
        lambda: Option<Vec<f64>>,
        #[serde(default = "default_effective")]
        effective: usize,
        #[serde(default)]
        negate: bool,
        #[serde(default)]
        gradient_mode: Option<GradientMode>,
    },
    /// `β₀√D − Σ x_j`, or its negative.
    Linear {
        dimension: usize,
        threshold: f64,
        beta0: f64,
        #[serde(default)]
        negate: bool,
        #[serde(default)]
        gradient_mode: Option<GradientMode>,
    },
    /// Maximum top-node displacement of the 25-bar truss.
    Truss25 {
        threshold: f64,
        /// Geometry file; the bundled one when absent.
        #[serde(default)]
        geometry: Option<PathBuf>,
        #[serde(default)]
        gradient_mode: Option<GradientMode>,
    },
}

fn default_effective() -> usize {
    4
}

impl ModelBlock {
    pub fn threshold(&self) -> f64 {
        match self {
            ModelBlock::Product { threshold, .. }
            | ModelBlock::Linear { threshold, .. }
            | ModelBlock::Truss25 { threshold, .. } => *threshold,
        }
    }

    /// Builds the model; relative geometry paths resolve against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<ModelSpec> {
        let (model, threshold, mode): (Box<dyn Model>, f64, GradientMode) = match self {
            ModelBlock::Product {
                dimension,
                threshold,
                lambda,
                effective,
                negate,
                gradient_mode,
            } => {
                let m = match lambda {
                    Some(l) => {
                        if l.len() != *dimension {
                            return Err(Error::Config(format!(
                                "model.lambda has {} entries but dimension is {dimension}",
                                l.len()
                            )));
                        }
                        ProductModel::new(l.clone(), *negate)?
                    }
                    None => ProductModel::with_effective(*dimension, *effective, 1.0, 500.0, *negate),
                };
                (Box::new(m), *threshold, gradient_mode.unwrap_or(GradientMode::Analytic))
            }
            ModelBlock::Linear {
                dimension,
                threshold,
                beta0,
                negate,
                gradient_mode,
            } => (
                Box::new(if *negate {
                    LinearModel::negated(*beta0, *dimension)
                } else {
                    LinearModel::new(*beta0, *dimension)
                }),
                *threshold,
                gradient_mode.unwrap_or(GradientMode::Analytic),
            ),
            ModelBlock::Truss25 {
                threshold,
                geometry,
                gradient_mode,
            } => {
                let g = match geometry {
                    Some(p) => {
                        let p = match base {
                            Some(b) if p.is_relative() => b.join(p),
                            _ => p.clone(),
                        };
                        TrussGeometry::from_path(p)?
                    }
                    None => TrussGeometry::truss25(),
                };
                (
                    Box::new(TrussModel::new(g)),
                    *threshold,
                    gradient_mode.unwrap_or(GradientMode::CentralDifference { step: 1e-5 }),
                )
            }
        };
        if model.dimension() == 0 {
            return Err(Error::Config("model dimension must be >= 1".into()));
        }
        ModelSpec::new(model, threshold, mode)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RvPreset {
    /// Table of load, modulus and area distributions for the bundled truss.
    Truss25,
}

/// Exactly one of `preset`, `iid` (with the model dimension) or `marginals`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RvBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<RvPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iid: Option<MarginalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<MarginalSpec>>,
}

impl RvBlock {
    pub fn build(&self, dimension: usize) -> Result<RandomVectorSpec> {
        let set = [self.preset.is_some(), self.iid.is_some(), self.marginals.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if set != 1 {
            return Err(Error::Config(
                "rv block needs exactly one of 'preset', 'iid' or 'marginals'".into(),
            ));
        }
        let spec = if let Some(RvPreset::Truss25) = self.preset {
            TrussGeometry::truss25_inputs()?
        } else if let Some(m) = self.iid {
            RandomVectorSpec::iid(m, dimension)?
        } else {
            RandomVectorSpec::new(self.marginals.clone().unwrap_or_default())?
        };
        if spec.dim() != dimension {
            return Err(Error::Config(format!(
                "rv block defines {} variables but the model has {dimension} inputs",
                spec.dim()
            )));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesBlock {
    /// MCS sample size; no MCS when absent.
    pub mcs_n: Option<usize>,
    pub form: bool,
    pub form_max_iterations: usize,
    pub form_tol: f64,
}

impl Default for BaselinesBlock {
    fn default() -> Self {
        BaselinesBlock {
            mcs_n: None,
            form: false,
            form_max_iterations: 100,
            form_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: None,
            formats: vec![OutputFormat::Json, OutputFormat::Csv],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelBlock,
    pub rv: RvBlock,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub baselines: BaselinesBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// A validated configuration with its model and random vector built.
pub struct Experiment {
    pub config: RunConfigFile,
    pub model: ModelSpec,
    pub spec: RandomVectorSpec,
}

impl RunConfigFile {
    /// Parses and validates; error messages carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfigFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.model.threshold().is_finite() {
            return Err(Error::Config("model.threshold must be finite".into()));
        }
        self.learner.validate()?;
        if self.baselines.mcs_n == Some(0) {
            return Err(Error::Config("baselines.mcs_n must be >= 1".into()));
        }
        if !(self.baselines.form_tol > 0.0) {
            return Err(Error::Config("baselines.form_tol must be > 0".into()));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "run".into())
    }

    /// Builds the model and random vector, checking that they agree.
    pub fn build(&self, base: Option<&Path>) -> Result<Experiment> {
        let model = self.model.build(base)?;
        let spec = self.rv.build(model.dimension())?;
        Ok(Experiment {
            config: self.clone(),
            model,
            spec,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = r#"{
        "name": "example1_d30",
        "model": { "name": "product", "dimension": 30, "threshold": 0.65, "negate": true },
        "rv": { "iid": { "kind": "uniform", "p1": 0.0, "p2": 1.0 } },
        "learner": { "seed": 3 },
        "baselines": { "mcs_n": 1000000, "form": true }
    }"#;

    #[test]
    fn parses_and_builds() {
        let c = RunConfigFile::from_json(EX1).unwrap();
        assert_eq!(c.learner.seed, 3);
        assert_eq!(c.learner.n0, 50);
        let e = c.build(None).unwrap();
        assert_eq!(e.spec.dim(), 30);
        assert!((e.model.value(&[0.75; 30]).unwrap() + 1.0).abs() < 1e-14);
        // Round trip.
        let again = RunConfigFile::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let bad = EX1.replace("\"seed\": 3", "\"seed\": 3, \"sed\": 1");
        let e = RunConfigFile::from_json(&bad).unwrap_err().to_string();
        assert!(e.contains("unknown field") && e.contains("line 5"), "{e}");
        let bad = EX1.replace("\"negate\": true", "\"negate\": true, \"extra\": 1");
        assert!(RunConfigFile::from_json(&bad).is_err());
        let bad = EX1.replace("\"form\": true", "\"form\": true, \"x\": 0");
        assert!(RunConfigFile::from_json(&bad).is_err());
    }

    #[test]
    fn n0_constraint_is_named() {
        let bad = EX1.replace("\"seed\": 3", "\"seed\": 3, \"n0\": 300, \"pool_size\": 10000");
        let e = RunConfigFile::from_json(&bad).unwrap_err().to_string();
        assert!(e.contains("n0 <= pool_size / 100"), "{e}");
    }

    #[test]
    fn rv_block_needs_exactly_one_source() {
        let bad = EX1.replace(
            r#""rv": { "iid": { "kind": "uniform", "p1": 0.0, "p2": 1.0 } }"#,
            r#""rv": {}"#,
        );
        let c = RunConfigFile::from_json(&bad).unwrap();
        assert!(c.build(None).is_err());
    }

    #[test]
    fn truss_preset_builds() {
        let c = RunConfigFile::from_json(
            r#"{ "model": { "name": "truss25", "threshold": 0.45 }, "rv": { "preset": "truss25" } }"#,
        )
        .unwrap();
        let e = c.build(None).unwrap();
        assert_eq!(e.spec.dim(), 57);
        assert_eq!(e.model.gradient_mode, GradientMode::CentralDifference { step: 1e-5 });
    }
}
