//! Replication campaigns and their performance measures.

pub mod analysis;
pub mod config;
pub mod report;
pub mod rng;
pub mod run;

pub use analysis::{
    cohort_regrets, individual_regret_distribution, pooled_cvar_curve, pooled_empirical_cvar, population_regret_curve,
    sampling_proportion_curves, CvarPoint, ProportionRow, RegretPoint,
};
pub use config::{Experiment, ExperimentConfig, StrategyConfig, StrategyName};
pub use report::{format_sig, summarize, write_reports, Manifest, ReportSet, StrategyMetrics};
pub use run::{
    regret_ledgers, run_experiment, run_replication, ExperimentOutcome, RegretLedger, ReplicationLog, SeasonLog,
    StrategyRun,
};
