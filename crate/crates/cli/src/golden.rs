//! The bundled scenario corpus and its stored baselines.

use std::collections::BTreeMap;

use morrey_core::functionals::CaseTag;
use serde::{Deserialize, Serialize};

use crate::run::Report;

pub const CORPUS: &str = include_str!("../golden/corpus.toml");
pub const BASELINES: &str = include_str!("../golden/baselines.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenTolerances {
    /// Relative tolerance on every `I_k` and on `I`.
    pub functional_rel: f64,
    /// Relative tolerance on the oracle lower bound.
    pub oracle_rel: f64,
}

impl Default for GoldenTolerances {
    fn default() -> Self {
        Self {
            functional_rel: 1e-6,
            oracle_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    pub case: String,
    pub verdict: String,
    /// `I_k` by `k`; `None` for `+∞`.
    pub components: BTreeMap<String, Option<f64>>,
    pub oracle_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baselines {
    pub tolerances: GoldenTolerances,
    pub scenarios: BTreeMap<String, Baseline>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Baseline {
    pub fn from_report(r: &Report) -> Self {
        Self {
            case: r.case.clone(),
            verdict: r.verdict_label().to_string(),
            components: r
                .functionals
                .iter()
                .flat_map(|f| &f.components)
                .map(|c| (format!("I{}", c.k), finite(c.value)))
                .collect(),
            oracle_l: r.oracle.as_ref().and_then(|o| finite(o.lower_bound)),
        }
    }
}

impl Baselines {
    pub fn from_reports(reports: &[Report], tolerances: GoldenTolerances) -> Self {
        Self {
            tolerances,
            scenarios: reports.iter().map(|r| (r.scenario.clone(), Baseline::from_report(r))).collect(),
        }
    }
}

fn close(a: Option<f64>, b: Option<f64>, rel: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => (a - b).abs() <= rel * a.abs().max(b.abs()),
        _ => false,
    }
}

/// One line per deviation; empty when the run matches.
pub fn compare(reports: &[Report], baselines: &Baselines) -> Vec<String> {
    let tol = baselines.tolerances;
    let mut out = Vec::new();
    for r in reports {
        let Some(b) = baselines.scenarios.get(&r.scenario) else {
            out.push(format!("{}: no baseline", r.scenario));
            continue;
        };
        let got = Baseline::from_report(r);
        if got.case != b.case {
            out.push(format!("{}: case {} != baseline {}", r.scenario, got.case, b.case));
        }
        if got.verdict != b.verdict {
            out.push(format!("{}: verdict {} != baseline {}", r.scenario, got.verdict, b.verdict));
        }
        if got.components.keys().ne(b.components.keys()) {
            out.push(format!("{}: components {:?} != baseline {:?}", r.scenario, got.components.keys(), b.components.keys()));
        }
        for (k, v) in &got.components {
            if let Some(expected) = b.components.get(k) {
                if !close(*v, *expected, tol.functional_rel) {
                    out.push(format!("{}: {k} = {v:?}, baseline {expected:?}", r.scenario));
                }
            }
        }
        if !close(got.oracle_l, b.oracle_l, tol.oracle_rel) {
            out.push(format!("{}: oracle L = {:?}, baseline {:?}", r.scenario, got.oracle_l, b.oracle_l));
        }
    }
    for name in baselines.scenarios.keys() {
        if !reports.iter().any(|r| &r.scenario == name) {
            out.push(format!("{name}: baseline scenario missing from the corpus"));
        }
    }
    out
}

/// Supported tags that no scenario exercises.
pub fn missing_tags(reports: &[Report]) -> Vec<CaseTag> {
    CaseTag::ALL
        .into_iter()
        .filter(|t| !reports.iter().any(|r| r.tag.as_deref() == Some(t.label())))
        .collect()
}
