//! Experiment configuration file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::{CohortSpec, DistributionSpec, Environment, Law};
use crate::error::{Error, Result};
use crate::metrics::RiskLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Bcb,
    Etc,
    Oracle,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyName,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_trials: Option<usize>,
}

impl StrategyConfig {
    pub fn label(&self) -> String {
        match self.kind {
            StrategyName::Bcb => "BCB".into(),
            StrategyName::Etc => format!("ETC-{}", self.t_trials.unwrap_or(0)),
            StrategyName::Oracle => "Oracle".into(),
            StrategyName::Uniform => "Uniform".into(),
        }
    }
}

/// One strategy object or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Strategies {
    One(StrategyConfig),
    Many(Vec<StrategyConfig>),
}

impl Strategies {
    pub fn as_slice(&self) -> &[StrategyConfig] {
        match self {
            Strategies::One(s) => std::slice::from_ref(s),
            Strategies::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub id: String,
    pub proportion: f64,
    pub arms: Vec<Law>,
    pub upper_bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub total: usize,
    pub cohorts: Vec<CohortConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolunteerConfig {
    pub min: usize,
    pub max: usize,
}

fn default_ci_delta() -> f64 {
    0.05
}

fn default_truth_samples() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: Strategies,
    #[serde(rename = "horizon_T")]
    pub horizon: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub population: PopulationConfig,
    pub volunteers: VolunteerConfig,
    pub output_dir: PathBuf,
    /// Risk of each one-sided bound of the pooled CVaR band.
    #[serde(default = "default_ci_delta")]
    pub ci_delta: f64,
    /// Draws used to estimate the CVaR of laws without finite support.
    #[serde(default = "default_truth_samples")]
    pub truth_samples: usize,
    /// Seasons at which individual regrets are reported; the horizon when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub individual_regret_at: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
        Self::from_json(&text).map_err(|source| Error::Json { path: path.to_owned(), source })
    }

    pub fn strategies(&self) -> &[StrategyConfig] {
        self.strategy.as_slice()
    }

    /// Seasons at which individual regrets are reported.
    pub fn individual_horizons(&self) -> Vec<usize> {
        self.individual_regret_at.clone().unwrap_or_else(|| vec![self.horizon])
    }

    /// Checks every invariant and builds the runnable experiment.
    pub fn validate(&self) -> Result<Experiment> {
        let cfg_err = |path: &str, msg: String| Error::config(format!("{path}: {msg}"));
        if self.horizon < 1 {
            return Err(cfg_err("horizon_T", "must be at least 1".into()));
        }
        if self.replications < 1 {
            return Err(cfg_err("replications", "must be at least 1".into()));
        }
        if !(self.ci_delta > 0.0 && self.ci_delta < 1.0) {
            return Err(cfg_err("ci_delta", format!("must lie in (0,1), got {}", self.ci_delta)));
        }
        if self.truth_samples < 1 {
            return Err(cfg_err("truth_samples", "must be at least 1".into()));
        }
        if let Some(at) = &self.individual_regret_at {
            if let Some(t) = at.iter().find(|&&t| t < 1 || t > self.horizon) {
                return Err(cfg_err("individual_regret_at", format!("season {t} outside 1..={}", self.horizon)));
            }
        }

        let strategies = self.strategies();
        if strategies.is_empty() {
            return Err(cfg_err("strategy", "no strategy given".into()));
        }
        let mut alpha = None;
        let mut labels = HashSet::new();
        for (i, s) in strategies.iter().enumerate() {
            let path = format!("strategy[{i}]");
            let level = RiskLevel::new(s.alpha)
                .map_err(|_| cfg_err(&format!("{path}.alpha"), format!("alpha must lie in (0,1], got {}", s.alpha)))?;
            match (s.kind, s.t_trials) {
                (StrategyName::Etc, None) => return Err(cfg_err(&path, "etc needs t_trials".into())),
                (StrategyName::Etc, Some(0)) => {
                    return Err(cfg_err(&format!("{path}.t_trials"), "must be at least 1".into()))
                }
                (StrategyName::Etc, Some(_)) => {}
                (_, Some(_)) => return Err(cfg_err(&format!("{path}.t_trials"), "only etc takes t_trials".into())),
                (_, None) => {}
            }
            match alpha {
                None => alpha = Some(level),
                Some(a) if a != level => {
                    return Err(cfg_err(&format!("{path}.alpha"), "all strategies must share one alpha".into()))
                }
                _ => {}
            }
            if !labels.insert(s.label()) {
                return Err(cfg_err(&path, format!("duplicate strategy {}", s.label())));
            }
        }

        let pop = &self.population;
        if pop.total == 0 {
            return Err(cfg_err("population.total", "must be positive".into()));
        }
        if pop.cohorts.is_empty() {
            return Err(cfg_err("population.cohorts", "no cohorts".into()));
        }
        let mut ids = HashSet::new();
        let mut cohorts = Vec::with_capacity(pop.cohorts.len());
        for (i, c) in pop.cohorts.iter().enumerate() {
            let path = format!("population.cohorts[{i}]");
            if !ids.insert(c.id.as_str()) {
                return Err(cfg_err(&format!("{path}.id"), format!("duplicate cohort id {}", c.id)));
            }
            if !(c.proportion.is_finite() && c.proportion >= 0.0) {
                return Err(cfg_err(&format!("{path}.proportion"), format!("invalid proportion {}", c.proportion)));
            }
            if c.arms.len() < 2 {
                return Err(cfg_err(&format!("{path}.arms"), format!("need at least 2 arms, got {}", c.arms.len())));
            }
            if c.arms.len() != c.upper_bounds.len() {
                return Err(cfg_err(
                    &format!("{path}.upper_bounds"),
                    format!("{} bounds for {} arms", c.upper_bounds.len(), c.arms.len()),
                ));
            }
            let arms = c
                .arms
                .iter()
                .zip(&c.upper_bounds)
                .enumerate()
                .map(|(k, (law, &b))| {
                    DistributionSpec::new(law.clone(), b)
                        .map_err(|e| cfg_err(&format!("{path}.arms[{k}]"), strip_category(e)))
                })
                .collect::<Result<Vec<_>>>()?;
            cohorts.push(CohortSpec { id: c.id.clone(), proportion: c.proportion, arms });
        }
        let sum: f64 = pop.cohorts.iter().map(|c| c.proportion).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(cfg_err("population.cohorts", format!("proportions sum to {sum}, not 1")));
        }

        let v = self.volunteers;
        if v.min > v.max {
            return Err(cfg_err("volunteers", format!("min {} exceeds max {}", v.min, v.max)));
        }
        if v.max > pop.total {
            return Err(cfg_err("volunteers.max", format!("{} exceeds population total {}", v.max, pop.total)));
        }

        let env = Environment::new(cohorts, pop.total).map_err(|e| cfg_err("population", strip_category(e)))?;
        Ok(Experiment { config: self.clone(), env, alpha: alpha.expect("at least one strategy") })
    }
}

fn strip_category(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Domain(m) | Error::Data(m) => m,
        other => other.to_string(),
    }
}

/// A validated configuration together with its environment.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    env: Environment,
    alpha: RiskLevel,
}

impl Experiment {
    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    /// Risk level shared by every strategy and every performance measure.
    pub fn alpha(&self) -> RiskLevel {
        self.alpha
    }

    pub fn strategies(&self) -> &[StrategyConfig] {
        self.config.strategies()
    }

    /// Smallest and largest reward any law can produce.
    pub fn reward_range(&self) -> (f64, f64) {
        let laws = self.env.cohorts().iter().flat_map(|c| c.arms.iter());
        let lo = laws.clone().map(DistributionSpec::support_min).fold(f64::INFINITY, f64::min);
        let hi = laws.map(DistributionSpec::upper_bound).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}
