//! Experiment configuration: a single JSON document, every field optional,
//! unknown keys rejected.

use std::path::Path;

use loopint::geometry::FlatTorus;
use loopint::loopforms::IntegralForm;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_form, parse_poly, ExprError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("config: {0}")]
    Schema(#[from] serde_json::Error),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads for sampling; results do not depend on it.
    pub workers: Option<usize>,
    pub torus: TorusSpec,
    /// Form expressions for `compare`.
    pub forms: Vec<String>,
    /// Times for `compare` and `localization`.
    pub times: Vec<f64>,
    pub tolerance: ToleranceSpec,
    pub suites: SuiteSpec,
    pub wiener: WienerSpec,
    pub compare: CompareSpec,
    pub index: IndexSpec,
    pub flow: FlowSpec,
    pub refine: RefineSpec,
    pub zeta: ZetaSpec,
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TorusSpec {
    pub dim: usize,
    /// Lattice basis as rows of a square matrix; the unit lattice if absent.
    pub lattice: Option<Vec<Vec<f64>>>,
    pub spin: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSpec {
    /// Largest accepted Monte Carlo z-score.
    pub z_max: f64,
    /// Agreement of deterministic routes.
    pub exact: f64,
    /// Getzler flow integral against the spectral flow.
    pub getzler: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSpec {
    pub clifford_cases: usize,
    pub measure_cases: usize,
    pub q_cases: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WienerSpec {
    pub t: f64,
    pub grid: usize,
    pub samples: u64,
    /// Interior node for the convolution check.
    pub split_node: usize,
    pub potential: String,
    pub fk_grid: usize,
    pub fk_cutoff: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    pub grid: usize,
    pub samples: u64,
    pub cutoff: i64,
    /// The spectral value is recomputed at `cutoff + cutoff_step`.
    pub cutoff_step: i64,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexSpec {
    pub fluxes: Vec<i64>,
    pub t: f64,
    pub grid: usize,
    pub samples: u64,
    /// Landau levels written to the CSV table.
    pub table_levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSpec {
    pub windings: Vec<i64>,
    pub length: f64,
    pub spin: u8,
    pub t: f64,
    pub cutoff: i64,
    pub steps: usize,
    pub getzler_nodes: usize,
    pub grid: usize,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSpec {
    pub flux: i64,
    pub t: f64,
    pub grids: Vec<usize>,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZetaSpec {
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub csv: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            workers: None,
            torus: TorusSpec::default(),
            forms: vec![
                "wedge(point(0.75, dx(2, add(0.5, cos([1,-1], -0.6), sin([1,-1], 0.2)))), \
                 point(0.25, dx(1, add(0.3, cos([1,0], 0.7), sin([1,0], 0.4)))))"
                    .into(),
                "wedge(density(add(1, cos(1, 0.5), sin(1, 0.2)), dx(1, add(0.3, cos([1,0], 0.7), sin([1,0], 0.4)))), \
                 point(0.5, dx(2, add(0.5, cos([1,-1], -0.6), sin([1,-1], 0.2)))))"
                    .into(),
                "point(0.375, dx(1, 2, add(0.8, cos([0,1], 0.5), sin([0,1], -0.4))))".into(),
            ],
            times: vec![0.6],
            tolerance: ToleranceSpec::default(),
            suites: SuiteSpec::default(),
            wiener: WienerSpec::default(),
            compare: CompareSpec::default(),
            index: IndexSpec::default(),
            flow: FlowSpec::default(),
            refine: RefineSpec::default(),
            zeta: ZetaSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

impl Default for TorusSpec {
    fn default() -> Self {
        Self { dim: 2, lattice: None, spin: vec![] }
    }
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self { z_max: 3.0, exact: 1e-8, getzler: 1e-3 }
    }
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self { clifford_cases: 1000, measure_cases: 100, q_cases: 1000 }
    }
}

impl Default for WienerSpec {
    fn default() -> Self {
        Self {
            t: 0.6,
            grid: 16,
            samples: 100_000,
            split_node: 5,
            potential: "add(cos([1,0], 0.8), sin([1,0], 0.3), sin([0,1], 0.5))".into(),
            fk_grid: 128,
            fk_cutoff: 10,
        }
    }
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self { grid: 32, samples: 100_000, cutoff: 16, cutoff_step: 8, nodes: 16 }
    }
}

impl Default for IndexSpec {
    fn default() -> Self {
        Self { fluxes: vec![-2, -1, 0, 1, 2], t: 0.02, grid: 1024, samples: 10_000, table_levels: 8 }
    }
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            windings: vec![-3, -2, -1, 0, 1, 2, 3],
            length: 1.0,
            spin: 0,
            t: 1.0,
            cutoff: 64,
            steps: 64,
            getzler_nodes: 64,
            grid: 16,
            samples: 100_000,
        }
    }
}

impl Default for RefineSpec {
    fn default() -> Self {
        Self { flux: 2, t: 0.25, grids: vec![16, 32, 64, 128], samples: 100_000 }
    }
}

impl Default for ZetaSpec {
    fn default() -> Self {
        Self { points: 32 }
    }
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { csv: true }
    }
}

fn positive(name: &str, x: f64) -> Result<(), ConfigError> {
    if !(x.is_finite() && x > 0.0) {
        return invalid(format!("{name} must be positive and finite"));
    }
    Ok(())
}

fn nonzero(name: &str, n: u64) -> Result<(), ConfigError> {
    if n == 0 {
        return invalid(format!("{name} must be at least 1"));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Reads a config, or the config embedded in a report written by a
    /// previous run.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let value = match value {
            serde_json::Value::Object(mut m) if m.contains_key("report") => {
                m.remove("config").ok_or_else(|| ConfigError::Invalid("report has no embedded config".into()))?
            }
            v => v,
        };
        Ok(serde_json::from_value(value)?)
    }

    pub fn torus(&self) -> Result<FlatTorus, ConfigError> {
        let n = self.torus.dim;
        if n == 0 || n > 4 {
            return invalid("torus.dim must lie in 1..=4");
        }
        let t = match &self.torus.lattice {
            None => FlatTorus::unit(n),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return invalid(format!("torus.lattice must be {n} x {n}"));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                FlatTorus::new(DMatrix::from_row_slice(n, n, &flat)).map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
        };
        if self.torus.spin.is_empty() {
            return Ok(t);
        }
        if self.torus.spin.len() != n {
            return invalid(format!("torus.spin must have {n} entries"));
        }
        t.with_spin(&self.torus.spin).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn forms(&self) -> Result<Vec<IntegralForm>, ConfigError> {
        self.forms.iter().map(|f| Ok(parse_form(f, self.torus.dim)?)).collect()
    }

    /// Checks every field a run may touch, so that a bad config fails
    /// before any output is written.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.torus()?;
        self.forms()?;
        parse_poly(&self.wiener.potential, self.torus.dim)?;
        if self.times.is_empty() {
            return invalid("times must not be empty");
        }
        for &t in &self.times {
            positive("times", t)?;
        }
        positive("tolerance.z_max", self.tolerance.z_max)?;
        positive("tolerance.exact", self.tolerance.exact)?;
        positive("tolerance.getzler", self.tolerance.getzler)?;
        positive("wiener.t", self.wiener.t)?;
        positive("index.t", self.index.t)?;
        positive("flow.t", self.flow.t)?;
        positive("flow.length", self.flow.length)?;
        positive("refine.t", self.refine.t)?;
        for (name, n) in [
            ("wiener.samples", self.wiener.samples),
            ("compare.samples", self.compare.samples),
            ("index.samples", self.index.samples),
            ("flow.samples", self.flow.samples),
            ("refine.samples", self.refine.samples),
            ("wiener.grid", self.wiener.grid as u64),
            ("wiener.fk_grid", self.wiener.fk_grid as u64),
            ("compare.grid", self.compare.grid as u64),
            ("compare.nodes", self.compare.nodes as u64),
            ("index.grid", self.index.grid as u64),
            ("flow.grid", self.flow.grid as u64),
            ("flow.steps", self.flow.steps as u64),
            ("flow.getzler_nodes", self.flow.getzler_nodes as u64),
            ("zeta.points", self.zeta.points as u64),
        ] {
            nonzero(name, n)?;
        }
        if self.compare.cutoff < 1 || self.compare.cutoff_step < 1 || self.wiener.fk_cutoff < 1 || self.flow.cutoff < 1 {
            return invalid("cutoffs must be at least 1");
        }
        if self.flow.spin > 1 {
            return invalid("flow.spin must be 0 or 1");
        }
        if self.workers == Some(0) {
            return invalid("workers must be at least 1");
        }
        if self.refine.grids.len() < 2 {
            return invalid("refine.grids needs at least two grids");
        }
        if self.wiener.split_node == 0 || self.wiener.split_node >= self.wiener.grid {
            return invalid("wiener.split_node must be an interior node of wiener.grid");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"sed": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"index": {"flux": [1]}}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"seed": 3, "index": {"fluxes": [1]}}"#).unwrap();
        assert_eq!((c.seed, c.index.fluxes.clone(), c.index.t), (3, vec![1], 0.02));
    }

    #[test]
    fn embedded_config_round_trips() {
        let c = ExperimentConfig { seed: 11, ..Default::default() };
        let report = serde_json::json!({ "report": "index", "config": c });
        assert_eq!(ExperimentConfig::from_json(&report.to_string()).unwrap(), c);
    }

    #[test]
    fn bad_values_are_caught() {
        for text in [
            r#"{"torus": {"dim": 2, "lattice": [[1, 0]]}}"#,
            r#"{"torus": {"spin": [1]}}"#,
            r#"{"forms": ["point(0.5, dx(3, 1))"]}"#,
            r#"{"times": [-1]}"#,
            r#"{"refine": {"grids": [16]}}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).and_then(|c| c.validate()).is_err(), "{text}");
        }
    }
}
