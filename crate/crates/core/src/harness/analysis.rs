//! Performance measures computed from season logs.
//!
//! Regret measures use the true CVaR gaps `Δ_k^c` of a [`RegretLedger`]:
//!
//! - population regret `R(T) = Σ_c Pr(c) Σ_k Δ_k^c · E[N_k^c(T)]`, with the
//!   expectation replaced by the replication average of the pull counts;
//! - individual regret `Σ_k Δ_k^c · N_k^{f,c}(T)` of one farmer.
//!
//! The pooled CVaR concatenates every reward of every replication up to
//! season `T`.

use serde::{Deserialize, Serialize};

use super::run::{RegretLedger, ReplicationLog};
use crate::environment::Population;
use crate::error::{Error, Result};
use crate::metrics::{self, RiskLevel};

fn horizon(logs: &[ReplicationLog]) -> usize {
    logs.iter().map(|l| l.seasons.len()).max().unwrap_or(0)
}

fn check_cohorts(logs: &[ReplicationLog], truths: &[RegretLedger]) -> Result<()> {
    for log in logs {
        for season in &log.seasons {
            for rec in &season.records {
                let ledger = truths.get(rec.cohort).ok_or_else(|| {
                    Error::config(format!("no proportion or true CVaRs for cohort index {}", rec.cohort))
                })?;
                if rec.arm >= ledger.gaps.len() {
                    return Err(Error::data(format!("arm {} unknown in cohort {}", rec.arm, ledger.cohort_id)));
                }
            }
        }
    }
    Ok(())
}

/// Cumulative pull counts `[season][cohort][arm]` of one replication.
pub fn cumulative_pulls(log: &ReplicationLog, truths: &[RegretLedger]) -> Vec<Vec<Vec<u64>>> {
    let mut running: Vec<Vec<u64>> = truths.iter().map(|t| vec![0; t.gaps.len()]).collect();
    log.seasons
        .iter()
        .map(|season| {
            for rec in &season.records {
                running[rec.cohort][rec.arm] += 1;
            }
            running.clone()
        })
        .collect()
}

/// Realized regret `Σ_k Δ_k^c N_k^c(T)` of every cohort in one replication.
pub fn cohort_regrets(log: &ReplicationLog, truths: &[RegretLedger], t: usize) -> Result<Vec<f64>> {
    check_cohorts(std::slice::from_ref(log), truths)?;
    let mut regrets = vec![0.0; truths.len()];
    for season in log.seasons.iter().take(t) {
        for rec in &season.records {
            regrets[rec.cohort] += truths[rec.cohort].gaps[rec.arm];
        }
    }
    Ok(regrets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub t: usize,
    /// `R(T)` evaluated with replication-average pull counts.
    pub mean: f64,
    pub q10: f64,
    pub q90: f64,
}

fn weighted_regret(counts: &[Vec<f64>], truths: &[RegretLedger]) -> f64 {
    truths
        .iter()
        .zip(counts)
        .map(|(ledger, n)| ledger.proportion * ledger.gaps.iter().zip(n).map(|(g, n)| g * n).sum::<f64>())
        .sum()
}

/// Population regret for every season `T = 1..`, with the 10% and 90%
/// quantiles of the per-replication regret.
pub fn population_regret_curve(logs: &[ReplicationLog], truths: &[RegretLedger]) -> Result<Vec<RegretPoint>> {
    check_cohorts(logs, truths)?;
    if logs.is_empty() {
        return Ok(Vec::new());
    }
    let t = horizon(logs);
    if logs.iter().any(|l| l.seasons.len() != t) {
        return Err(Error::data("replications cover different numbers of seasons"));
    }
    let pulls: Vec<_> = logs.iter().map(|l| cumulative_pulls(l, truths)).collect();
    let r = logs.len() as f64;
    let q10 = RiskLevel::new(0.1)?;
    let q90 = RiskLevel::new(0.9)?;
    (0..t)
        .map(|s| {
            let mut mean_counts: Vec<Vec<f64>> = truths.iter().map(|l| vec![0.0; l.gaps.len()]).collect();
            let mut per_rep = Vec::with_capacity(pulls.len());
            for p in &pulls {
                let counts: Vec<Vec<f64>> = p[s].iter().map(|c| c.iter().map(|&n| n as f64).collect()).collect();
                per_rep.push(weighted_regret(&counts, truths));
                for (acc, row) in mean_counts.iter_mut().zip(&counts) {
                    acc.iter_mut().zip(row).for_each(|(a, n)| *a += n);
                }
            }
            mean_counts.iter_mut().flatten().for_each(|a| *a /= r);
            Ok(RegretPoint {
                t: s + 1,
                mean: weighted_regret(&mean_counts, truths),
                q10: metrics::empirical_var(&per_rep, q10)?,
                q90: metrics::empirical_var(&per_rep, q90)?,
            })
        })
        .collect()
}

/// Individual regrets after `t` seasons, one per (replication, farmer):
/// replication-major, farmers in id order, non-volunteers included at 0.
pub fn individual_regret_distribution(
    logs: &[ReplicationLog],
    truths: &[RegretLedger],
    population: &Population,
    t: usize,
) -> Result<Vec<f64>> {
    check_cohorts(logs, truths)?;
    let mut out = Vec::with_capacity(logs.len() * population.len());
    for log in logs {
        let mut regrets = vec![0.0; population.len()];
        for season in log.seasons.iter().take(t) {
            for rec in &season.records {
                let slot = regrets
                    .get_mut(rec.farmer)
                    .ok_or_else(|| Error::data(format!("farmer {} not in population", rec.farmer)))?;
                *slot += truths[rec.cohort].gaps[rec.arm];
            }
        }
        out.extend(regrets);
    }
    Ok(out)
}

/// Empirical CVaR of every reward of every replication in seasons `1..=t`.
/// `None` if no reward was observed.
pub fn pooled_empirical_cvar(logs: &[ReplicationLog], alpha: RiskLevel, t: usize) -> Option<f64> {
    let pooled: Vec<f64> =
        logs.iter().flat_map(|l| l.seasons.iter().take(t)).flat_map(|s| s.records.iter().map(|r| r.reward)).collect();
    metrics::empirical_cvar(&pooled, alpha).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvarPoint {
    pub t: usize,
    pub cvar: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Pooled empirical CVaR with its confidence band for every season.
/// Seasons before the first observed reward are skipped.
pub fn pooled_cvar_curve(
    logs: &[ReplicationLog],
    alpha: RiskLevel,
    delta: f64,
    range: (f64, f64),
) -> Result<Vec<CvarPoint>> {
    let mut pooled: Vec<f64> = Vec::new();
    let mut points = Vec::new();
    for s in 0..horizon(logs) {
        let mut fresh: Vec<f64> = logs
            .iter()
            .filter_map(|l| l.seasons.get(s))
            .flat_map(|season| season.records.iter().map(|r| r.reward))
            .collect();
        if let Some(v) = fresh.iter().find(|&&v| !(range.0..=range.1).contains(&v)) {
            return Err(Error::data(format!("reward {v} outside [{}, {}]", range.0, range.1)));
        }
        fresh.sort_by(f64::total_cmp);
        pooled = merge_sorted(&pooled, &fresh);
        if pooled.is_empty() {
            continue;
        }
        let (ci_lo, ci_hi) = metrics::cvar_interval_sorted(&pooled, alpha, delta, range.0, range.1);
        points.push(CvarPoint { t: s + 1, cvar: metrics::empirical_cvar_sorted(&pooled, alpha), ci_lo, ci_hi });
    }
    Ok(points)
}

fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionRow {
    pub cohort: String,
    pub arm: usize,
    pub t: usize,
    pub proportion: f64,
}

/// Share of each arm among a cohort's pulls in seasons `1..=T`, averaged
/// over the replications in which the cohort was pulled at all by `T`.
/// Rows are ordered by cohort, then season, then arm.
pub fn sampling_proportion_curves(logs: &[ReplicationLog], truths: &[RegretLedger]) -> Result<Vec<ProportionRow>> {
    check_cohorts(logs, truths)?;
    let pulls: Vec<_> = logs.iter().map(|l| cumulative_pulls(l, truths)).collect();
    let mut rows = Vec::new();
    for (c, ledger) in truths.iter().enumerate() {
        for s in 0..horizon(logs) {
            let mut acc = vec![0.0; ledger.gaps.len()];
            let mut defined = 0usize;
            for p in &pulls {
                let Some(counts) = p.get(s).map(|season| &season[c]) else { continue };
                let total: u64 = counts.iter().sum();
                if total == 0 {
                    continue;
                }
                defined += 1;
                for (a, &n) in acc.iter_mut().zip(counts) {
                    *a += n as f64 / total as f64;
                }
            }
            if defined == 0 {
                continue;
            }
            rows.extend(acc.into_iter().enumerate().map(|(arm, a)| ProportionRow {
                cohort: ledger.cohort_id.clone(),
                arm,
                t: s + 1,
                proportion: a / defined as f64,
            }));
        }
    }
    Ok(rows)
}
