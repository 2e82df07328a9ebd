//! Synthetic cohort world.
//!
//! Each cohort (a soil type) owns one bounded reward law per arm. Farmers are
//! partitioned into cohorts once per experiment, and every season a random
//! subset of them volunteers. Laws are immutable for the whole run.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, RiskLevel};
use crate::policies::BatchAssignment;

/// One mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Component {
    PointMass {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Normal restricted to `[lo, hi]`, sampled by rejection.
    TruncatedNormal {
        mean: f64,
        sd: f64,
        lo: f64,
        hi: f64,
    },
}

impl Component {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Component::PointMass { value } => value.is_finite(),
            Component::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Component::TruncatedNormal { mean, sd, lo, hi } => {
                mean.is_finite() && sd.is_finite() && sd > 0.0 && lo.is_finite() && hi.is_finite() && lo < hi
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid mixture component {self:?}")))
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Component::PointMass { value } => (value, value),
            Component::Uniform { lo, hi } | Component::TruncatedNormal { lo, hi, .. } => (lo, hi),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Component::PointMass { value } => value,
            Component::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    lo + (hi - lo) * rng.random::<f64>()
                }
            }
            Component::TruncatedNormal { mean, sd, lo, hi } => loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = mean + sd * z;
                if (lo..=hi).contains(&x) {
                    break x;
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub component: Component,
}

/// How a reward law generates values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    /// Bootstrap from a table of values, uniform unless weights are given.
    EmpiricalTable {
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Mixture {
        components: Vec<WeightedComponent>,
    },
}

/// A validated bounded reward law.
#[derive(Debug, Clone)]
pub struct DistributionSpec {
    law: Law,
    upper_bound: f64,
    picker: WeightedIndex<f64>,
    probs: Vec<f64>,
}

fn normalized(weights: &[f64], what: &str, strict: bool) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::config(format!("{what}: no entries")));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::config(format!("{what}: weights must be finite and >= 0")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::config(format!("{what}: weights sum to zero")));
    }
    if strict && (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("{what}: mixing probabilities sum to {total}, not 1")));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

impl DistributionSpec {
    /// Validates the law and checks that its support lies below `upper_bound`.
    ///
    /// Mixture probabilities must sum to 1 (±1e-9). Table weights are
    /// relative and get normalized.
    pub fn new(law: Law, upper_bound: f64) -> Result<Self> {
        if !upper_bound.is_finite() {
            return Err(Error::config("upper bound must be finite"));
        }
        let probs = match &law {
            Law::EmpiricalTable { values, weights } => {
                if values.is_empty() {
                    return Err(Error::config("empirical table without values"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("empirical table contains non-finite values"));
                }
                match weights {
                    None => vec![1.0 / values.len() as f64; values.len()],
                    Some(w) if w.len() != values.len() => {
                        return Err(Error::config(format!(
                            "empirical table has {} values but {} weights",
                            values.len(),
                            w.len()
                        )))
                    }
                    Some(w) => normalized(w, "empirical table", false)?,
                }
            }
            Law::Mixture { components } => {
                for c in components {
                    c.component.validate()?;
                }
                let w: Vec<f64> = components.iter().map(|c| c.weight).collect();
                normalized(&w, "mixture", true)?
            }
        };
        let picker = WeightedIndex::new(&probs).map_err(|e| Error::config(format!("law weights: {e}")))?;
        let spec = Self { law, upper_bound, picker, probs };
        let max = spec.support_max();
        if max > upper_bound {
            return Err(Error::config(format!(
                "law support reaches {max}, above its declared upper bound {upper_bound}"
            )));
        }
        Ok(spec)
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    fn supports(&self) -> Vec<(f64, f64)> {
        match &self.law {
            Law::EmpiricalTable { values, .. } => values.iter().map(|&v| (v, v)).collect(),
            Law::Mixture { components } => components.iter().map(|c| c.component.support()).collect(),
        }
    }

    /// Smallest value with positive probability (over components with
    /// positive weight).
    pub fn support_min(&self) -> f64 {
        self.supports()
            .iter()
            .zip(&self.probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, _)| s.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn support_max(&self) -> f64 {
        self.supports()
            .iter()
            .zip(&self.probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, _)| s.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(value, probability)` atoms when the law is finitely supported.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match &self.law {
            Law::EmpiricalTable { values, .. } => {
                Some(values.iter().copied().zip(self.probs.iter().copied()).collect())
            }
            Law::Mixture { components } => components
                .iter()
                .zip(&self.probs)
                .map(|(c, &p)| match c.component {
                    Component::PointMass { value } => Some((value, p)),
                    Component::Uniform { lo, hi } if lo == hi => Some((lo, p)),
                    _ => None,
                })
                .collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = self.picker.sample(rng);
        match &self.law {
            Law::EmpiricalTable { values, .. } => values[i],
            Law::Mixture { components } => components[i].component.sample(rng),
        }
    }

    /// CVaR of the law: exact for finite support, otherwise a Monte-Carlo
    /// estimate from `mc_samples` draws whose tolerance is the half-width of
    /// the 99.9% confidence band around it.
    pub fn true_cvar<R: Rng + ?Sized>(&self, level: RiskLevel, mc_samples: usize, rng: &mut R) -> Result<TrueCvar> {
        if let Some(atoms) = self.atoms() {
            let value = metrics::true_cvar_finite(&atoms, level)?;
            return Ok(TrueCvar { value, exact: true, tolerance: 0.0 });
        }
        if mc_samples == 0 {
            return Err(Error::config("Monte-Carlo CVaR needs at least one sample"));
        }
        let mut draws: Vec<f64> = (0..mc_samples).map(|_| self.sample(rng)).collect();
        draws.sort_by(f64::total_cmp);
        let value = metrics::empirical_cvar_sorted(&draws, level);
        let (lo, hi) = metrics::cvar_interval_sorted(&draws, level, 1e-3, self.support_min(), self.support_max());
        Ok(TrueCvar { value, exact: false, tolerance: (value - lo).max(hi - value) })
    }
}

impl PartialEq for DistributionSpec {
    fn eq(&self, other: &Self) -> bool {
        self.law == other.law && self.upper_bound == other.upper_bound
    }
}

/// CVaR of a reward law, with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueCvar {
    pub value: f64,
    pub exact: bool,
    /// Zero when exact.
    pub tolerance: f64,
}

/// One soil type: its population share and one reward law per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub id: String,
    pub proportion: f64,
    pub arms: Vec<DistributionSpec>,
}

impl CohortSpec {
    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.arms.iter().map(DistributionSpec::upper_bound).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Farmer {
    pub id: usize,
    pub cohort: usize,
}

/// Fixed set of farmers; farmer `i` has id `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    farmers: Vec<Farmer>,
    counts: Vec<usize>,
}

impl Population {
    pub fn farmers(&self) -> &[Farmer] {
        &self.farmers
    }

    pub fn len(&self) -> usize {
        self.farmers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.farmers.is_empty()
    }

    pub fn cohort_of(&self, farmer: usize) -> Option<usize> {
        self.farmers.get(farmer).map(|f| f.cohort)
    }

    /// Farmers per cohort.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn members(&self, cohort: usize) -> impl Iterator<Item = usize> + '_ {
        self.farmers.iter().filter(move |f| f.cohort == cohort).map(|f| f.id)
    }
}

/// Largest-remainder apportionment of `total` seats. Ties in the fractional
/// parts go to the lower index.
pub fn apportion(proportions: &[f64], total: usize) -> Result<Vec<usize>> {
    if total == 0 {
        return Err(Error::config("population total must be positive"));
    }
    if proportions.is_empty() {
        return Err(Error::config("no cohorts"));
    }
    if proportions.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::config("cohort proportions must be finite and >= 0"));
    }
    let sum: f64 = proportions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("cohort proportions sum to {sum}, not 1")));
    }
    // Products like 0.07 × 500 land a hair below the integer.
    let exact: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    let frac = |i: usize| (exact[i] - counts[i] as f64).max(0.0);
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Partitions `total` farmers into cohorts by largest-remainder rounding of
/// the proportions. Cohort 0 receives the lowest farmer ids.
pub fn build_population(cohorts: &[CohortSpec], total: usize) -> Result<Population> {
    let proportions: Vec<f64> = cohorts.iter().map(|c| c.proportion).collect();
    let counts = apportion(&proportions, total)?;
    let farmers = counts
        .iter()
        .enumerate()
        .flat_map(|(cohort, &n)| std::iter::repeat_n(cohort, n))
        .enumerate()
        .map(|(id, cohort)| Farmer { id, cohort })
        .collect();
    Ok(Population { farmers, counts })
}

/// The farmers who take part in one season, in increasing id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolunteerDraw {
    pub season: usize,
    pub farmers: Vec<usize>,
}

impl VolunteerDraw {
    /// Splits the draw into per-cohort farmer lists.
    pub fn by_cohort(&self, pop: &Population, n_cohorts: usize) -> Vec<Vec<usize>> {
        let mut split = vec![Vec::new(); n_cohorts];
        for &f in &self.farmers {
            if let Some(c) = pop.cohort_of(f) {
                split[c].push(f);
            }
        }
        split
    }
}

/// Draws a batch size uniformly in `min_n..=max_n`, then that many distinct
/// farmers uniformly from the whole population.
pub fn draw_volunteers<R: Rng + ?Sized>(
    pop: &Population,
    season: usize,
    min_n: usize,
    max_n: usize,
    rng: &mut R,
) -> Result<VolunteerDraw> {
    if min_n > max_n {
        return Err(Error::config(format!("volunteer minimum {min_n} exceeds maximum {max_n}")));
    }
    if max_n > pop.len() {
        return Err(Error::config(format!("volunteer maximum {max_n} exceeds population size {}", pop.len())));
    }
    let size = rng.random_range(min_n..=max_n);
    let mut farmers = index::sample(rng, pop.len(), size).into_vec();
    farmers.sort_unstable();
    Ok(VolunteerDraw { season, farmers })
}

/// One observed reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub farmer: usize,
    pub cohort: usize,
    pub arm: usize,
    pub reward: f64,
}

/// The world a campaign runs in.
#[derive(Debug, Clone)]
pub struct Environment {
    cohorts: Vec<CohortSpec>,
    population: Population,
}

impl Environment {
    pub fn new(cohorts: Vec<CohortSpec>, total: usize) -> Result<Self> {
        for c in &cohorts {
            if c.arms.len() < 2 {
                return Err(Error::config(format!("cohort {} needs at least 2 arms", c.id)));
            }
        }
        let population = build_population(&cohorts, total)?;
        Ok(Self { cohorts, population })
    }

    pub fn cohorts(&self) -> &[CohortSpec] {
        &self.cohorts
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    /// Plays one season for one cohort: one independent draw per assigned
    /// farmer from the law of its arm.
    pub fn season_step<R: Rng + ?Sized>(
        &self,
        cohort: usize,
        assignment: &BatchAssignment,
        rng: &mut R,
    ) -> Result<Vec<RewardRecord>> {
        let spec = self.cohorts.get(cohort).ok_or_else(|| Error::data(format!("unknown cohort index {cohort}")))?;
        assignment
            .pairs
            .iter()
            .map(|&(farmer, arm)| {
                match self.population.cohort_of(farmer) {
                    Some(c) if c == cohort => {}
                    Some(c) => return Err(Error::data(format!("farmer {farmer} belongs to cohort {c}, not {cohort}"))),
                    None => return Err(Error::data(format!("unknown farmer {farmer}"))),
                }
                let law = spec
                    .arms
                    .get(arm)
                    .ok_or_else(|| Error::data(format!("unknown arm {arm} for cohort {}", spec.id)))?;
                let reward = law.sample(rng);
                if reward > law.upper_bound() {
                    return Err(Error::RewardAboveBound { arm, value: reward, bound: law.upper_bound() });
                }
                Ok(RewardRecord { farmer, cohort, arm, reward })
            })
            .collect()
    }
}
