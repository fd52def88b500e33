//! The per-scenario pipeline and its reports.

use std::path::Path;
use std::time::Instant;

use morrey_core::functionals::{check_admissibility, classify, Admissibility, FunctionalValue, Functionals};
use morrey_core::oracle::{best_constant_search, verify_equivalence, widening_bounds, Verdict};
use morrey_core::par::{self, Execution};
use morrey_core::reduction::complementary_transform;
use morrey_core::Embedding;
use serde::Serialize;

use crate::config::{Resolved, ScenarioSpec, Task};

/// Command-line overrides applied to every scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub slack: Option<f64>,
    pub no_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Ok,
    Inadmissible,
    VerifyFail,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    #[serde(serialize_with = "morrey_core::serialize_extended")]
    pub lower_bound: f64,
    /// Quadrature error of the Rayleigh quotient at the argmax.
    #[serde(serialize_with = "morrey_core::serialize_extended")]
    pub error_estimate: f64,
    pub argmax_knots: Vec<f64>,
    pub argmax_values: Vec<f64>,
    pub evaluations: usize,
    pub best_restart: usize,
    pub seed: u64,
    pub rng: &'static str,
    /// `(d, L)` on supports `[10^{-d}, 10^d]`, only when `I = ∞`.
    pub widened: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformedWeights {
    pub v1: String,
    pub v2: String,
    pub w1: String,
    pub w2: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub task: Task,
    pub config: ScenarioEcho,
    pub case: String,
    pub tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transformed: Option<TransformedWeights>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<Admissibility>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functionals: Option<FunctionalValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outcome: Outcome,
    pub seconds: f64,
}

/// Everything needed to rerun the scenario.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEcho {
    pub spec: ScenarioSpec,
    pub tolerance: morrey_core::quadrature::Tolerance,
    pub functionals: morrey_core::functionals::EvalConfig,
    pub search: morrey_core::oracle::SearchConfig,
    pub exponent_table: morrey_core::functionals::ExponentTable,
}

impl Report {
    pub fn verdict_label(&self) -> &'static str {
        match (&self.verdict, self.outcome) {
            (Some(v), _) => v.label(),
            (None, Outcome::Inadmissible) => "inadmissible",
            (None, Outcome::Error) => "error",
            _ => "",
        }
    }
}

/// Runs `task` (or each scenario's own task) over all scenarios.
pub fn run_all(scenarios: &[Resolved], task: Option<Task>, ov: Overrides, exec: Execution) -> Vec<Report> {
    par::map(exec, scenarios, |s| run_one(s, task.unwrap_or(s.spec.task), ov))
}

pub fn run_one(s: &Resolved, task: Task, ov: Overrides) -> Report {
    let start = Instant::now();
    let mut search = s.search;
    if let Some(seed) = ov.seed {
        search.seed = seed;
    }
    if let Some(slack) = ov.slack {
        search.slack = slack;
    }
    let case = classify(&s.embedding.exps);
    let mut report = Report {
        scenario: s.name.clone(),
        task,
        config: ScenarioEcho {
            spec: s.spec.clone(),
            tolerance: s.tolerance,
            functionals: s.functionals,
            search,
            exponent_table: s.exponent_table.clone(),
        },
        case: case.to_string(),
        tag: case.tag().map(|t| t.to_string()),
        transformed: None,
        admissibility: None,
        functionals: None,
        oracle: None,
        verdict: None,
        error: None,
        outcome: Outcome::Ok,
        seconds: 0.0,
    };

    let emb = if task == Task::Complementary {
        match invert(&s.embedding) {
            Ok(e) => {
                report.transformed = Some(TransformedWeights {
                    v1: e.v1.radial.normalized().to_string(),
                    v2: e.v2.radial.normalized().to_string(),
                    w1: e.w1.normalized().to_string(),
                    w2: e.w2.normalized().to_string(),
                });
                e
            }
            Err(msg) => {
                report.error = Some(msg);
                report.outcome = Outcome::Error;
                return finish(report, start, ov);
            }
        }
    } else {
        s.embedding.clone()
    };

    let wants_functionals = matches!(task, Task::Evaluate | Task::Verify | Task::Complementary);
    if wants_functionals {
        let adm = check_admissibility(&case, &emb, &s.tolerance);
        let passed = adm.passed();
        report.admissibility = Some(adm);
        if !passed {
            report.outcome = Outcome::Inadmissible;
            return finish(report, start, ov);
        }
        let tag = case.tag().expect("admissible scenarios are classified");
        match Functionals::new(&emb, s.exponent_table.clone(), s.functionals).and_then(|f| f.estimate(tag)) {
            Ok(v) => report.functionals = Some(v),
            Err(e) => {
                report.error = Some(e.to_string());
                report.outcome = Outcome::Error;
                return finish(report, start, ov);
            }
        }
    }

    let wants_oracle = matches!(task, Task::Oracle | Task::Verify | Task::Complementary);
    if wants_oracle {
        let hints = report.functionals.as_ref().map(|f| f.hints()).unwrap_or_default();
        match best_constant_search(&emb, &search, &hints, &s.tolerance) {
            Ok(out) => {
                let diverging = report.functionals.as_ref().is_some_and(|f| !f.finite);
                let widened = if diverging {
                    widening_bounds(&emb, &search, &s.spec.widening_decades, &s.tolerance)
                } else {
                    Vec::new()
                };
                report.oracle = Some(OracleReport {
                    lower_bound: out.lower_bound,
                    error_estimate: out.lower_bound * s.tolerance.rel,
                    argmax_knots: out.argmax.knots().to_vec(),
                    argmax_values: out.argmax.values().to_vec(),
                    evaluations: out.evaluations,
                    best_restart: out.best_restart,
                    seed: out.seed,
                    rng: out.rng,
                    widened,
                });
            }
            Err(e) => {
                report.error = Some(e.to_string());
                report.outcome = Outcome::Error;
                return finish(report, start, ov);
            }
        }
    }

    if let (Some(f), Some(o)) = (&report.functionals, &report.oracle) {
        let widened: Vec<f64> = o.widened.iter().map(|(_, l)| *l).collect();
        let v = verify_equivalence(f.value, o.lower_bound, search.slack, &widened, search.divergence_threshold);
        if !v.passed() {
            report.outcome = Outcome::VerifyFail;
        }
        report.verdict = Some(v);
    }
    finish(report, start, ov)
}

fn finish(mut report: Report, start: Instant, ov: Overrides) -> Report {
    report.seconds = if ov.no_timing { 0.0 } else { start.elapsed().as_secs_f64() };
    report
}

/// Rewrites complementary spaces as ordinary ones via `x = y/|y|²`.
fn invert(e: &Embedding) -> Result<Embedding, String> {
    let x = e.exps;
    let (v1, w1) = complementary_transform(&e.v1, &e.w1, x.p1, x.q1).map_err(|e| format!("source space: {e}"))?;
    let (v2, w2) = complementary_transform(&e.v2, &e.w2, x.p2, x.q2).map_err(|e| format!("target space: {e}"))?;
    Ok(Embedding::new(x, v1, v2, w1, w2))
}

fn fmt_value(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.10e}")
    } else {
        format!("{x}")
    }
}

pub const SUMMARY_HEADER: [&str; 8] = ["scenario", "tag", "I_total", "components", "oracle_L", "ratio", "verdict", "seconds"];

pub fn summary_row(r: &Report) -> [String; 8] {
    let (total, components) = match &r.functionals {
        Some(f) => (
            fmt_value(f.value),
            f.components
                .iter()
                .map(|c| format!("I{}={}", c.k, fmt_value(c.value)))
                .collect::<Vec<_>>()
                .join(";"),
        ),
        None => (String::new(), String::new()),
    };
    let oracle = r.oracle.as_ref().map(|o| fmt_value(o.lower_bound)).unwrap_or_default();
    let ratio = match r.verdict {
        Some(Verdict::PassDivergent { .. }) => "inf".to_string(),
        Some(v) => fmt_value(v.ratio()),
        None => String::new(),
    };
    [
        r.scenario.clone(),
        r.tag.clone().unwrap_or_else(|| r.case.clone()),
        total,
        components,
        oracle,
        ratio,
        r.verdict_label().to_string(),
        format!("{:.3}", r.seconds),
    ]
}

pub fn write_summary(path: &Path, reports: &[Report]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in reports {
        w.write_record(summary_row(r))?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub fn write_report(dir: &Path, r: &Report) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(r).map_err(std::io::Error::other)?;
    text.push('\n');
    write_atomic(&dir.join(format!("{}.json", r.scenario)), text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

/// Exit status for a batch: the most severe scenario outcome.
pub fn exit_code(reports: &[Report]) -> i32 {
    match reports.iter().map(|r| r.outcome).max().unwrap_or(Outcome::Ok) {
        Outcome::Ok => 0,
        Outcome::Error => 1,
        Outcome::Inadmissible => 2,
        Outcome::VerifyFail => 3,
    }
}
