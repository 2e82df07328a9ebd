//! Report tables and run manifest.
//!
//! Four CSV tables are written next to `manifest.json`:
//!
//! | file                    | columns                                  |
//! |-------------------------|------------------------------------------|
//! | `cvar_curve.csv`        | strategy,T,pooled_cvar,ci_lo,ci_hi       |
//! | `regret_curve.csv`      | strategy,T,mean_regret,q10,q90           |
//! | `proportions.csv`       | strategy,cohort,arm,T,proportion         |
//! | `individual_regret.csv` | strategy,T,farmer_regret                 |
//!
//! Floats carry 9 significant digits. Arms are 0-based.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::{self, CvarPoint, ProportionRow, RegretPoint};
use super::config::{Experiment, ExperimentConfig};
use super::run::{ExperimentOutcome, RegretLedger};
use crate::error::{Error, Result};

pub const CVAR_CURVE: &str = "cvar_curve.csv";
pub const REGRET_CURVE: &str = "regret_curve.csv";
pub const PROPORTIONS: &str = "proportions.csv";
pub const INDIVIDUAL_REGRET: &str = "individual_regret.csv";
pub const MANIFEST: &str = "manifest.json";

pub const CVAR_HEADER: [&str; 5] = ["strategy", "T", "pooled_cvar", "ci_lo", "ci_hi"];
pub const REGRET_HEADER: [&str; 5] = ["strategy", "T", "mean_regret", "q10", "q90"];
pub const PROPORTIONS_HEADER: [&str; 5] = ["strategy", "cohort", "arm", "T", "proportion"];
pub const INDIVIDUAL_HEADER: [&str; 3] = ["strategy", "T", "farmer_regret"];

/// Formats like C's `%.9g`: 9 significant digits, trailing zeros dropped,
/// scientific notation outside `1e-4 ≤ |x| < 1e9`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Performance measures of one strategy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrategyMetrics {
    pub label: String,
    pub cvar_curve: Vec<CvarPoint>,
    pub regret_curve: Vec<RegretPoint>,
    pub proportions: Vec<ProportionRow>,
    /// `(T, regrets)` for every reported season.
    pub individual_regrets: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub master_seed: u64,
    pub alpha: f64,
    pub config: ExperimentConfig,
    pub true_cvars: Vec<RegretLedger>,
}

impl Manifest {
    pub fn new(exp: &Experiment, truths: Vec<RegretLedger>) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").into(),
            master_seed: exp.config().master_seed,
            alpha: exp.alpha().get(),
            config: exp.config().clone(),
            true_cvars: truths,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSet {
    pub strategies: Vec<StrategyMetrics>,
    pub manifest: Option<Manifest>,
}

/// Derives every performance measure from the logs of an experiment.
pub fn summarize(exp: &Experiment, outcome: &ExperimentOutcome) -> Result<ReportSet> {
    let range = exp.reward_range();
    let strategies = outcome
        .runs
        .iter()
        .map(|run| {
            let individual_regrets = exp
                .config()
                .individual_horizons()
                .into_iter()
                .map(|t| {
                    let regrets = analysis::individual_regret_distribution(
                        &run.logs,
                        &outcome.truths,
                        exp.environment().population(),
                        t,
                    )?;
                    Ok((t, regrets))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StrategyMetrics {
                label: run.label.clone(),
                cvar_curve: analysis::pooled_cvar_curve(&run.logs, exp.alpha(), exp.config().ci_delta, range)?,
                regret_curve: analysis::population_regret_curve(&run.logs, &outcome.truths)?,
                proportions: analysis::sampling_proportion_curves(&run.logs, &outcome.truths)?,
                individual_regrets,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReportSet { strategies, manifest: Some(Manifest::new(exp, outcome.truths.clone())) })
}

fn csv_file(dir: &Path, name: &str, header: &[&str]) -> Result<(PathBuf, csv::Writer<fs::File>)> {
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&path)
        .map_err(|source| Error::Csv { path: path.clone(), source })?;
    w.write_record(header).map_err(|source| Error::Csv { path: path.clone(), source })?;
    Ok((path, w))
}

/// Writes the four tables and, when present, the manifest into `out_dir`,
/// creating it if needed. Returns the written paths.
pub fn write_reports(report: &ReportSet, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io { path: out_dir.to_owned(), source })?;
    let csv_err = |path: &Path| {
        let path = path.to_owned();
        move |source| Error::Csv { path, source }
    };
    let mut written = Vec::new();

    let (path, mut w) = csv_file(out_dir, CVAR_CURVE, &CVAR_HEADER)?;
    for s in &report.strategies {
        for p in &s.cvar_curve {
            w.write_record([
                s.label.clone(),
                p.t.to_string(),
                format_sig(p.cvar),
                format_sig(p.ci_lo),
                format_sig(p.ci_hi),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    written.push(path);

    let (path, mut w) = csv_file(out_dir, REGRET_CURVE, &REGRET_HEADER)?;
    for s in &report.strategies {
        for p in &s.regret_curve {
            w.write_record([
                s.label.clone(),
                p.t.to_string(),
                format_sig(p.mean),
                format_sig(p.q10),
                format_sig(p.q90),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    written.push(path);

    let (path, mut w) = csv_file(out_dir, PROPORTIONS, &PROPORTIONS_HEADER)?;
    for s in &report.strategies {
        for row in &s.proportions {
            w.write_record([
                s.label.clone(),
                row.cohort.clone(),
                row.arm.to_string(),
                row.t.to_string(),
                format_sig(row.proportion),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    written.push(path);

    let (path, mut w) = csv_file(out_dir, INDIVIDUAL_REGRET, &INDIVIDUAL_HEADER)?;
    for s in &report.strategies {
        for (t, regrets) in &s.individual_regrets {
            for &r in regrets {
                w.write_record([s.label.clone(), t.to_string(), format_sig(r)]).map_err(csv_err(&path))?;
            }
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    written.push(path);

    if let Some(manifest) = &report.manifest {
        let path = out_dir.join(MANIFEST);
        let mut text =
            serde_json::to_string_pretty(manifest).map_err(|source| Error::Json { path: path.clone(), source })?;
        text.push('\n');
        fs::write(&path, text).map_err(|source| Error::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
