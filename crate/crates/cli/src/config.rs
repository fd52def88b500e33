//! Scenario configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use morrey_core::functionals::{EvalConfig, ExponentTable};
use morrey_core::oracle::SearchConfig;
use morrey_core::quadrature::Tolerance;
use morrey_core::weights::{AngularWeight, ExponentQuad, RnWeight, SphereGrid, WeightExpr};
use morrey_core::Embedding;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("scenario `{scenario}`: {message}")]
    Invalid { scenario: String, message: String },
    #[error("config defines no scenarios")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Evaluate,
    Oracle,
    #[default]
    Verify,
    /// The scenario describes complementary spaces; it is inverted and verified.
    Complementary,
}

/// Angular part of a separable weight, tabulated on a sphere grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AngularSpec {
    /// `above` where `s[axis] > cut`, `below` elsewhere.
    TwoLevel {
        resolution: usize,
        axis: usize,
        cut: f64,
        above: f64,
        below: f64,
    },
    /// One value per grid node, in grid order.
    Tabulated { resolution: usize, values: Vec<f64> },
}

fn one_dim() -> usize {
    1
}

fn unit() -> String {
    "1".into()
}

fn default_decades() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "one_dim")]
    pub dim: usize,
    /// `[p₁, p₂, q₁, q₂]`
    pub exponents: [f64; 4],
    #[serde(default = "unit")]
    pub v1: String,
    #[serde(default = "unit")]
    pub v2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1_angular: Option<AngularSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v2_angular: Option<AngularSpec>,
    pub w1: String,
    pub w2: String,
    #[serde(default)]
    pub task: Task,
    /// Support half-widths `d` of `[10^{-d}, 10^d]` searched when `I = ∞`.
    #[serde(default = "default_decades")]
    pub widening_decades: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<Tolerance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionals: Option<EvalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_table: Option<ExponentTable>,
}

/// A whole config file. Sections may appear in any order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub tolerance: Tolerance,
    #[serde(default)]
    pub functionals: EvalConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub exponent_table: ExponentTable,
    #[serde(default)]
    pub scenario: BTreeMap<String, ScenarioSpec>,
}

/// A scenario with its section defaults applied and its weights parsed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub spec: ScenarioSpec,
    pub embedding: Embedding,
    pub tolerance: Tolerance,
    pub functionals: EvalConfig,
    pub search: SearchConfig,
    pub exponent_table: ExponentTable,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Validates every scenario up front, in name order.
    pub fn resolve(&self) -> Result<Vec<Resolved>, ConfigError> {
        if self.scenario.is_empty() {
            return Err(ConfigError::Empty);
        }
        self.scenario.iter().map(|(name, spec)| self.resolve_one(name, spec)).collect()
    }

    fn resolve_one(&self, name: &str, spec: &ScenarioSpec) -> Result<Resolved, ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            scenario: name.to_string(),
            message,
        };
        let [p1, p2, q1, q2] = spec.exponents;
        let exps = ExponentQuad::new(p1, p2, q1, q2).map_err(|e| invalid(format!("exponents: {e}")))?;
        let weight = |key: &str, text: &str| WeightExpr::parse(text).map_err(|e| invalid(format!("{key}: {e}")));
        let rn = |key: &str, text: &str, angular: &Option<AngularSpec>| -> Result<RnWeight, ConfigError> {
            let radial = weight(key, text)?;
            match angular {
                None => Ok(RnWeight::radial(spec.dim, radial)),
                Some(a) => {
                    let a = build_angular(a, spec.dim).map_err(|m| invalid(format!("{key}_angular: {m}")))?;
                    RnWeight::new(spec.dim, radial, a).map_err(|e| invalid(format!("{key}_angular: {e}")))
                }
            }
        };
        if !(1..=3).contains(&spec.dim) {
            return Err(invalid(format!("dim must be 1, 2 or 3, got {}", spec.dim)));
        }
        let v1 = rn("v1", &spec.v1, &spec.v1_angular)?;
        let v2 = rn("v2", &spec.v2, &spec.v2_angular)?;
        let (w1, w2) = (weight("w1", &spec.w1)?, weight("w2", &spec.w2)?);
        let search = spec.search.unwrap_or(self.search);
        search.validate().map_err(|e| invalid(e.to_string()))?;
        let exponent_table = spec.exponent_table.clone().unwrap_or_else(|| self.exponent_table.clone());
        exponent_table.validate().map_err(|e| invalid(e.to_string()))?;
        if spec.widening_decades.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(invalid("widening_decades must be positive".into()));
        }
        Ok(Resolved {
            name: name.to_string(),
            spec: spec.clone(),
            embedding: Embedding::new(exps, v1, v2, w1, w2),
            tolerance: spec.tolerance.unwrap_or(self.tolerance),
            functionals: spec.functionals.unwrap_or(self.functionals),
            search,
            exponent_table,
        })
    }
}

fn build_angular(spec: &AngularSpec, dim: usize) -> Result<AngularWeight, String> {
    match spec {
        AngularSpec::TwoLevel {
            resolution,
            axis,
            cut,
            above,
            below,
        } => {
            if *axis >= dim {
                return Err(format!("axis {axis} out of range for dim {dim}"));
            }
            let grid = Arc::new(SphereGrid::new(dim, *resolution).map_err(|e| e.to_string())?);
            AngularWeight::from_fn(grid, |s| if s[*axis] > *cut { *above } else { *below }).map_err(|e| e.to_string())
        }
        AngularSpec::Tabulated { resolution, values } => {
            let grid = Arc::new(SphereGrid::new(dim, *resolution).map_err(|e| e.to_string())?);
            if values.len() != grid.len() {
                return Err(format!("{} values for a grid of {} nodes", values.len(), grid.len()));
            }
            AngularWeight::tabulated(grid, values.clone()).map_err(|e| e.to_string())
        }
    }
}
