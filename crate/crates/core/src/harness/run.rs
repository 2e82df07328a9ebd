//! Season loop and replication campaigns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, StrategyConfig, StrategyName};
use super::rng::{stream, Role};
use crate::environment::{draw_volunteers, RewardRecord, TrueCvar};
use crate::error::{Error, Result};
use crate::policies::{fair_assignment, BatchAssignment, FarmerLedgers, PolicyState, StrategyKind};

/// Everything observed in one season of one replication, records ordered by
/// farmer id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonLog {
    pub replication: usize,
    pub season: usize,
    pub records: Vec<RewardRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationLog {
    pub replication: usize,
    pub seasons: Vec<SeasonLog>,
}

/// True CVaRs of one cohort and the resulting per-arm gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub cohort_id: String,
    pub proportion: f64,
    pub true_cvars: Vec<TrueCvar>,
    pub optimal_cvar: f64,
    pub gaps: Vec<f64>,
}

impl RegretLedger {
    pub fn from_cvars(cohort_id: impl Into<String>, proportion: f64, true_cvars: Vec<TrueCvar>) -> Self {
        let optimal_cvar = true_cvars.iter().map(|t| t.value).fold(f64::NEG_INFINITY, f64::max);
        let gaps = true_cvars.iter().map(|t| optimal_cvar - t.value).collect();
        Self { cohort_id: cohort_id.into(), proportion, true_cvars, optimal_cvar, gaps }
    }

    /// Lowest-index arm with zero gap.
    pub fn optimal_arm(&self) -> usize {
        self.gaps.iter().position(|&g| g == 0.0).expect("some arm attains the maximum")
    }
}

/// Computes the true CVaR of every (cohort, arm) law at the experiment's
/// level: exactly for finite laws, by seeded Monte-Carlo otherwise.
pub fn regret_ledgers(exp: &Experiment) -> Result<Vec<RegretLedger>> {
    let cfg = exp.config();
    exp.environment()
        .cohorts()
        .iter()
        .enumerate()
        .map(|(c, cohort)| {
            let cvars = cohort
                .arms
                .iter()
                .enumerate()
                .map(|(k, law)| {
                    let mut rng = stream(cfg.master_seed, k as u64, Some(c), Role::Truth);
                    law.true_cvar(exp.alpha(), cfg.truth_samples, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RegretLedger::from_cvars(cohort.id.clone(), cohort.proportion, cvars))
        })
        .collect()
}

fn policy_kind(strategy: &StrategyConfig, ledger: &RegretLedger) -> StrategyKind {
    match strategy.kind {
        StrategyName::Bcb => StrategyKind::Bcb,
        StrategyName::Etc => StrategyKind::Etc { t_trials: strategy.t_trials.unwrap_or(1) },
        StrategyName::Oracle => StrategyKind::Oracle { optimal_arm: ledger.optimal_arm() },
        StrategyName::Uniform => StrategyKind::Uniform,
    }
}

struct CohortRun {
    state: PolicyState,
    ledgers: FarmerLedgers,
    env_rng: rand_chacha::ChaCha8Rng,
    policy_rng: rand_chacha::ChaCha8Rng,
}

/// Plays one replication of `strategy`. Each cohort is an independent
/// problem with its own policy state and its own random streams; volunteers
/// are drawn over the whole population and then split by cohort.
pub fn run_replication(
    exp: &Experiment,
    strategy: &StrategyConfig,
    truths: &[RegretLedger],
    replication: usize,
) -> Result<ReplicationLog> {
    let cfg = exp.config();
    let env = exp.environment();
    let seed = cfg.master_seed;
    let r = replication as u64;

    let mut cohorts = env
        .cohorts()
        .iter()
        .zip(truths)
        .enumerate()
        .map(|(c, (cohort, truth))| {
            Ok(CohortRun {
                state: PolicyState::new(policy_kind(strategy, truth), &cohort.upper_bounds(), exp.alpha())?,
                ledgers: FarmerLedgers::new(cohort.n_arms()),
                env_rng: stream(seed, r, Some(c), Role::Environment),
                policy_rng: stream(seed, r, Some(c), Role::Policy),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut volunteer_rng = stream(seed, r, None, Role::Volunteer);
    let mut seasons = Vec::with_capacity(cfg.horizon);
    for season in 1..=cfg.horizon {
        let draw =
            draw_volunteers(env.population(), season, cfg.volunteers.min, cfg.volunteers.max, &mut volunteer_rng)?;
        let mut records = Vec::with_capacity(draw.farmers.len());
        for (c, farmers) in draw.by_cohort(env.population(), cohorts.len()).into_iter().enumerate() {
            let run = &mut cohorts[c];
            let assignment = play_cohort_season(run, season, &farmers)?;
            let rewards = env.season_step(c, &assignment, &mut run.env_rng)?;
            let results: Vec<_> = rewards.iter().map(|rec| (rec.arm, rec.reward)).collect();
            run.state.update(&results)?;
            run.ledgers.record(&assignment);
            records.extend(rewards);
        }
        records.sort_by_key(|rec| rec.farmer);
        seasons.push(SeasonLog { replication, season, records });
    }
    Ok(ReplicationLog { replication, seasons })
}

fn play_cohort_season(run: &mut CohortRun, season: usize, farmers: &[usize]) -> Result<BatchAssignment> {
    let fresh = run.state.arms().iter().all(|a| a.n_obs() == 0);
    let arms = run.state.recommend(season, farmers.len(), &mut run.policy_rng)?;
    if run.state.kind() != StrategyKind::Bcb || fresh {
        return BatchAssignment::in_order(farmers, &arms);
    }
    let cvars = run.state.empirical_cvars();
    run.ledgers.refresh(&cvars);
    let ledgers: Vec<_> = farmers.iter().map(|&f| run.ledgers.get(f)).collect();
    fair_assignment(&arms, &ledgers, &cvars)
}

/// All replications of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub strategy: StrategyConfig,
    pub label: String,
    pub logs: Vec<ReplicationLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub truths: Vec<RegretLedger>,
    pub runs: Vec<StrategyRun>,
}

/// Runs every strategy for every replication on `threads` workers (0 lets
/// rayon decide). Results are gathered in replication order, so they do not
/// depend on the worker count. The first failing replication, by index,
/// aborts the experiment.
pub fn run_experiment(exp: &Experiment, threads: usize) -> Result<ExperimentOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start {threads} worker threads: {e}")))?;
    let truths = regret_ledgers(exp)?;
    let runs = exp
        .strategies()
        .iter()
        .map(|strategy| {
            let results: Vec<Result<ReplicationLog>> = pool.install(|| {
                (0..exp.config().replications)
                    .into_par_iter()
                    .map(|r| run_replication(exp, strategy, &truths, r))
                    .collect()
            });
            let logs = results
                .into_iter()
                .enumerate()
                .map(|(index, res)| res.map_err(|e| Error::Replication { index, source: Box::new(e) }))
                .collect::<Result<Vec<_>>>()?;
            Ok(StrategyRun { strategy: strategy.clone(), label: strategy.label(), logs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutcome { truths, runs })
}
