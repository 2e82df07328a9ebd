//! `bcb`: validate experiment configs, run replication campaigns and
//! summarize their report tables.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcb_core::harness::{self, ExperimentConfig};
use bcb_core::Error;
use clap::{Parser, Subcommand, ValueEnum};

mod table;

#[derive(Debug, Parser)]
#[command(name = "bcb", version, about = "Risk-aware batch bandit campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every strategy of a config and write the report tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one metric from the tables of a finished run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        metric: Metric,
        /// Only this season.
        #[arg(long)]
        at: Option<usize>,
        /// Only this cohort (proportions).
        #[arg(long)]
        cohort: Option<String>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Cvar,
    Regret,
    Proportions,
    Individual,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config() { 2 } else { 1 };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, replications, seed, threads, out } => cmd_run(&config, replications, seed, threads, out),
        Command::Report { input, metric, at, cohort } => cmd_report(&input, metric, at, cohort.as_deref()),
        Command::Validate { config } => cmd_validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Reads and parses a config; unreadable files and JSON errors are usage
/// errors anchored at `path:line:column`.
fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
        .map_err(|e| Failure::usage(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    let exp = cfg.validate().map_err(|e| Failure::usage(format!("{}: {}", path.display(), e)))?;
    let cohorts = exp.environment().cohorts();
    println!(
        "{}: ok ({} strategies, {} cohorts, {} farmers, T={}, R={})",
        path.display(),
        exp.strategies().len(),
        cohorts.len(),
        exp.environment().population().len(),
        cfg.horizon,
        cfg.replications
    );
    Ok(())
}

fn cmd_run(
    path: &Path,
    replications: Option<usize>,
    seed: Option<u64>,
    threads: usize,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg = load_config(path)?;
    if let Some(r) = replications {
        cfg.replications = r;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let exp = cfg.validate().map_err(|e| Failure::usage(format!("{}: {}", path.display(), e)))?;
    let outcome = harness::run_experiment(&exp, threads)?;
    let report = harness::summarize(&exp, &outcome)?;
    harness::write_reports(&report, &cfg.output_dir)?;
    for s in &report.strategies {
        let cvar = s.cvar_curve.last();
        let regret = s.regret_curve.last();
        println!(
            "{}: T={} pooled CVaR {} (CI {} .. {}), mean regret {}",
            s.label,
            regret.map_or(0, |p| p.t),
            cvar.map_or("n/a".into(), |p| harness::format_sig(p.cvar)),
            cvar.map_or("n/a".into(), |p| harness::format_sig(p.ci_lo)),
            cvar.map_or("n/a".into(), |p| harness::format_sig(p.ci_hi)),
            regret.map_or("n/a".into(), |p| harness::format_sig(p.mean)),
        );
    }
    println!("reports written to {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_report(dir: &Path, metric: Metric, at: Option<usize>, cohort: Option<&str>) -> Result<(), Failure> {
    let text = table::render(dir, metric, at, cohort).map_err(Failure::runtime)?;
    print!("{text}");
    Ok(())
}
