//! Batch front-end: scenario configs in, per-scenario JSON reports and a CSV
//! summary out.

pub mod config;
pub mod golden;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use morrey_core::par::Execution;

use crate::config::{Config, Task};
use crate::golden::{Baselines, GoldenTolerances};
use crate::run::{Overrides, Report};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_GOLDEN: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "morrey-embed", version, about = "Verify embeddings between weighted local Morrey-type spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the oracle search, overriding every scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Equivalence slack κ, overriding every scenario.
    #[arg(long, global = true)]
    pub slack: Option<f64>,
    /// Directory for reports and summary.csv.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write 0 for wall times so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,
    /// Run scenarios one after another.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the case tag of each scenario.
    Classify,
    /// Admissibility and the functionals I_k.
    Evaluate,
    /// Oracle lower bounds only.
    Oracle,
    /// Functionals, oracle and the equivalence verdict.
    Verify,
    /// Invert complementary scenarios and verify them.
    Complementary,
    /// Run each scenario's own task.
    Run,
    /// Run the bundled corpus against stored baselines.
    Golden {
        /// Baselines file; defaults to the bundled one.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Rewrite the baselines file from this run instead of comparing.
        #[arg(long, requires = "baseline")]
        bless: bool,
    },
}

impl Command {
    fn task(&self) -> Option<Task> {
        match self {
            Command::Classify => Some(Task::Classify),
            Command::Evaluate => Some(Task::Evaluate),
            Command::Oracle => Some(Task::Oracle),
            Command::Verify => Some(Task::Verify),
            Command::Complementary => Some(Task::Complementary),
            Command::Run | Command::Golden { .. } => None,
        }
    }
}

fn fail(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_CONFIG
}

/// Runs the command and returns the process exit status.
pub fn main_with(cli: Cli) -> i32 {
    let config = match (&cli.config, &cli.command) {
        (Some(path), _) => Config::load(path),
        (None, Command::Golden { .. }) => Config::parse(golden::CORPUS),
        (None, _) => return fail("--config is required"),
    };
    let scenarios = match config.and_then(|c| c.resolve()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if cli.slack.is_some_and(|k| !(k > 1.0)) {
        return fail("--slack must exceed 1");
    }
    let ov = Overrides {
        seed: cli.seed,
        slack: cli.slack,
        no_timing: cli.no_timing,
    };
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Auto };
    let reports = run::run_all(&scenarios, cli.command.task(), ov, exec);

    let default_out = !matches!(cli.command, Command::Golden { .. } | Command::Classify);
    let out = cli.out.clone().or_else(|| default_out.then(|| PathBuf::from("morrey-reports")));
    if let Some(dir) = &out {
        if let Err(e) = write_all(dir, &reports) {
            return fail(format!("writing reports to {}: {e}", dir.display()));
        }
    }

    match &cli.command {
        Command::Classify => {
            for r in &reports {
                println!("{}: {}", r.scenario, r.case);
            }
            0
        }
        Command::Golden { baseline, bless } => golden_outcome(&reports, baseline.as_ref(), *bless),
        _ => {
            for r in &reports {
                print_line(r);
            }
            run::exit_code(&reports)
        }
    }
}

fn write_all(dir: &std::path::Path, reports: &[Report]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in reports {
        run::write_report(dir, r)?;
    }
    run::write_summary(&dir.join("summary.csv"), reports)
}

fn print_line(r: &Report) {
    let row = run::summary_row(r);
    let mut line = format!("{}: {}", r.scenario, row[1]);
    if !row[2].is_empty() {
        line += &format!(" I={}", row[2]);
    }
    if !row[4].is_empty() {
        line += &format!(" L={}", row[4]);
    }
    if !row[6].is_empty() {
        line += &format!(" {}", row[6]);
    }
    if let Some(adm) = &r.admissibility {
        for c in adm.failures() {
            line += &format!(" [{:?}: {}]", c.condition, c.detail);
        }
    }
    if let Some(e) = &r.error {
        line += &format!(" error: {e}");
    }
    println!("{line}");
}

fn golden_outcome(reports: &[Report], baseline: Option<&PathBuf>, bless: bool) -> i32 {
    if bless {
        let path = baseline.expect("clap enforces --baseline with --bless");
        let b = Baselines::from_reports(reports, GoldenTolerances::default());
        let text = serde_json::to_string_pretty(&b).expect("baselines serialize") + "\n";
        return match std::fs::write(path, text) {
            Ok(()) => {
                println!("wrote {} baselines to {}", reports.len(), path.display());
                0
            }
            Err(e) => fail(e),
        };
    }
    let text = match baseline {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => return fail(format!("{}: {e}", p.display())),
        },
        None => golden::BASELINES.to_string(),
    };
    let baselines: Baselines = match serde_json::from_str(&text) {
        Ok(b) => b,
        Err(e) => return fail(format!("baselines: {e}")),
    };
    let deviations = golden::compare(reports, &baselines);
    for r in reports {
        let bad = deviations.iter().any(|d| d.starts_with(&format!("{}:", r.scenario)));
        println!("{} {} ({})", if bad { "FAIL" } else { "ok  " }, r.scenario, r.verdict_label());
    }
    let missing = golden::missing_tags(reports);
    for d in &deviations {
        println!("  {d}");
    }
    if !missing.is_empty() {
        println!("  corpus misses tags {missing:?}");
    }
    if deviations.is_empty() && missing.is_empty() {
        println!("golden: {} scenarios match", reports.len());
        0
    } else {
        println!("golden: {} deviations", deviations.len() + missing.len());
        EXIT_GOLDEN
    }
}
