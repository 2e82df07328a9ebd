//! Identification strategies for one cohort.
//!
//! Every strategy keeps one [`ArmState`] per arm and produces, each season,
//! a batch of arm recommendations for the volunteering farmers.
//!
//! BCB scores each arm, separately for every farmer, with a noisy empirical
//! CVaR: the arm's reward history (seeded with the arm's maximum observable
//! reward) is re-weighted with a flat Dirichlet draw, and the CVaR of the
//! re-weighted law is read off at the largest prefix whose weight stays
//! below `α`. The farmer gets the arm with the highest score. Recommendations
//! are then paired with farmers so that the arms that look best go to the
//! farmers who have lost the most so far.
//!
//! ETC spreads the arms evenly over the farmers for a fixed number of trial
//! seasons, then commits to the arm with the best empirical CVaR.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, RiskLevel};

/// Reward history of one arm. The history is kept sorted and always holds
/// the arm's upper bound once, on top of the real observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    arm_id: usize,
    history: Vec<f64>,
    n_obs: usize,
    upper_bound: f64,
}

impl ArmState {
    pub fn new(arm_id: usize, upper_bound: f64) -> Result<Self> {
        if !upper_bound.is_finite() {
            return Err(Error::config(format!("upper bound of arm {arm_id} must be finite")));
        }
        Ok(Self { arm_id, history: vec![upper_bound], n_obs: 0, upper_bound })
    }

    pub fn arm_id(&self) -> usize {
        self.arm_id
    }

    /// Sorted history, sentinel included.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Sorted real observations. The sentinel is the largest element, so it
    /// is the last one.
    pub fn observations(&self) -> &[f64] {
        &self.history[..self.history.len() - 1]
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    fn check(&self, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::data(format!("non-finite reward {reward} on arm {}", self.arm_id)));
        }
        if reward > self.upper_bound {
            return Err(Error::RewardAboveBound { arm: self.arm_id, value: reward, bound: self.upper_bound });
        }
        Ok(())
    }

    fn push(&mut self, reward: f64) {
        // Insert before equal values so the sentinel stays last.
        let at = self.history.partition_point(|&x| x < reward);
        self.history.insert(at, reward);
        self.n_obs += 1;
    }

    /// Empirical CVaR of the history, sentinel included.
    pub fn empirical_cvar(&self, level: RiskLevel) -> f64 {
        metrics::empirical_cvar_sorted(&self.history, level)
    }

    /// Empirical CVaR of the real observations, if there are any.
    pub fn observed_cvar(&self, level: RiskLevel) -> Option<f64> {
        let obs = self.observations();
        (!obs.is_empty()).then(|| metrics::empirical_cvar_sorted(obs, level))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyKind {
    Bcb,
    Etc {
        t_trials: usize,
    },
    /// Always plays a known optimal arm.
    Oracle {
        optimal_arm: usize,
    },
    /// Independent uniform choice for every farmer.
    Uniform,
}

impl StrategyKind {
    pub fn label(&self) -> String {
        match self {
            StrategyKind::Bcb => "BCB".into(),
            StrategyKind::Etc { t_trials } => format!("ETC-{t_trials}"),
            StrategyKind::Oracle { .. } => "Oracle".into(),
            StrategyKind::Uniform => "Uniform".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    arms: Vec<ArmState>,
    alpha: RiskLevel,
    kind: StrategyKind,
    etc_committed_arm: Option<usize>,
}

/// Flat Dirichlet sample of dimension `n`, obtained by normalizing `n`
/// independent unit exponentials.
pub fn dirichlet_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("Dirichlet weights of dimension 0"));
    }
    let mut w = Vec::with_capacity(n);
    fill_dirichlet(&mut w, n, rng);
    Ok(w)
}

fn fill_dirichlet<R: Rng + ?Sized>(buf: &mut Vec<f64>, n: usize, rng: &mut R) {
    loop {
        buf.clear();
        buf.extend((0..n).map(|_| rng.sample::<f64, _>(Exp1)));
        let total: f64 = buf.iter().sum();
        if total > 0.0 && total.is_finite() {
            buf.iter_mut().for_each(|w| *w /= total);
            return;
        }
    }
}

/// Noisy CVaR of a sorted history under the given weights.
///
/// `j` is the largest 1-based index whose weight prefix is at most `α`, or 1
/// when already the first weight exceeds `α`. The score is
/// `x_j − (1/α) Σ_i w_i · max(x_j − x_i, 0)` and always lies in
/// `[x_1, x_n]`.
pub fn noisy_cvar_score(history: &[f64], weights: &[f64], alpha: RiskLevel) -> Result<f64> {
    if history.len() != weights.len() {
        return Err(Error::domain(format!("history has {} values but {} weights", history.len(), weights.len())));
    }
    if history.is_empty() {
        return Err(Error::domain("empty history"));
    }
    let a = alpha.get();
    let mut prefix = 0.0;
    let mut j = 0;
    for (i, w) in weights.iter().enumerate() {
        prefix += w;
        if prefix > a {
            break;
        }
        j = i;
    }
    let xj = history[j];
    let penalty: f64 = history[..j].iter().zip(weights).map(|(&x, &w)| w * (xj - x).max(0.0)).sum();
    Ok((xj - penalty / a).clamp(history[0], history[history.len() - 1]))
}

/// Index of a maximal element, ties broken uniformly at random.
fn argmax_random_tie<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let mut best = 0;
    let mut ties = 1u32;
    for (i, &v) in values.iter().enumerate().skip(1) {
        match v.total_cmp(&values[best]) {
            std::cmp::Ordering::Greater => {
                best = i;
                ties = 1;
            }
            std::cmp::Ordering::Equal => {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    best = i;
                }
            }
            std::cmp::Ordering::Less => {}
        }
    }
    best
}

impl PolicyState {
    pub fn new(kind: StrategyKind, upper_bounds: &[f64], alpha: RiskLevel) -> Result<Self> {
        let k = upper_bounds.len();
        if k < 2 {
            return Err(Error::config(format!("need at least 2 arms, got {k}")));
        }
        match kind {
            StrategyKind::Etc { t_trials: 0 } => {
                return Err(Error::config("ETC needs at least one trial season"));
            }
            StrategyKind::Oracle { optimal_arm } if optimal_arm >= k => {
                return Err(Error::config(format!("oracle arm {optimal_arm} out of range for {k} arms")));
            }
            _ => {}
        }
        let arms = upper_bounds.iter().enumerate().map(|(i, &b)| ArmState::new(i, b)).collect::<Result<_>>()?;
        Ok(Self { arms, alpha, kind, etc_committed_arm: None })
    }

    /// Fresh BCB state: every history holds only its arm's upper bound.
    pub fn bcb_init(upper_bounds: &[f64], alpha: RiskLevel) -> Result<Self> {
        Self::new(StrategyKind::Bcb, upper_bounds, alpha)
    }

    pub fn etc_init(t_trials: usize, upper_bounds: &[f64], alpha: RiskLevel) -> Result<Self> {
        Self::new(StrategyKind::Etc { t_trials }, upper_bounds, alpha)
    }

    pub fn arms(&self) -> &[ArmState] {
        &self.arms
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn alpha(&self) -> RiskLevel {
        self.alpha
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn etc_committed_arm(&self) -> Option<usize> {
        self.etc_committed_arm
    }

    /// Per-arm empirical CVaR over the full histories, sentinel included.
    pub fn empirical_cvars(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.empirical_cvar(self.alpha)).collect()
    }

    /// One BCB recommendation per farmer.
    ///
    /// While nothing has been observed yet every arm is drawn uniformly at
    /// random. Afterwards each farmer gets the argmax of fresh noisy scores,
    /// one Dirichlet draw per arm.
    pub fn bcb_recommend_batch<R: Rng + ?Sized>(&self, n_farmers: usize, rng: &mut R) -> Vec<usize> {
        let k = self.arms.len();
        if self.arms.iter().all(|a| a.n_obs == 0) {
            return (0..n_farmers).map(|_| rng.random_range(0..k)).collect();
        }
        let mut weights = Vec::new();
        let mut scores = vec![0.0; k];
        (0..n_farmers)
            .map(|_| {
                for (score, arm) in scores.iter_mut().zip(&self.arms) {
                    fill_dirichlet(&mut weights, arm.history.len(), rng);
                    *score =
                        noisy_cvar_score(&arm.history, &weights, self.alpha).expect("weights sized to the history");
                }
                argmax_random_tie(&scores, rng)
            })
            .collect()
    }

    /// Arm with the best empirical CVaR over real observations only; ties
    /// broken uniformly at random.
    pub fn etc_commit<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let cvars = self
            .arms
            .iter()
            .map(|a| {
                a.observed_cvar(self.alpha)
                    .ok_or_else(|| Error::config(format!("cannot commit: arm {} was never observed", a.arm_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(argmax_random_tie(&cvars, rng))
    }

    /// ETC batch for 1-based `season`.
    ///
    /// During trials every arm appears `⌊n/K⌋` times and `n mod K` distinct
    /// arms, chosen uniformly, get one more; the batch is shuffled. The first
    /// season after trials fixes the committed arm.
    pub fn etc_recommend_batch<R: Rng + ?Sized>(
        &mut self,
        season: usize,
        n_farmers: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let StrategyKind::Etc { t_trials } = self.kind else {
            return Err(Error::config(format!("{} state asked for an ETC batch", self.kind.label())));
        };
        if season <= t_trials {
            let k = self.arms.len();
            let mut batch: Vec<usize> = (0..k).flat_map(|arm| std::iter::repeat_n(arm, n_farmers / k)).collect();
            batch.extend(index::sample(rng, k, n_farmers % k).iter());
            batch.shuffle(rng);
            return Ok(batch);
        }
        let arm = match self.etc_committed_arm {
            Some(arm) => arm,
            None => {
                let arm = self.etc_commit(rng)?;
                self.etc_committed_arm = Some(arm);
                arm
            }
        };
        Ok(vec![arm; n_farmers])
    }

    /// Recommendations for one season of this state's strategy.
    pub fn recommend<R: Rng + ?Sized>(&mut self, season: usize, n_farmers: usize, rng: &mut R) -> Result<Vec<usize>> {
        match self.kind {
            StrategyKind::Bcb => Ok(self.bcb_recommend_batch(n_farmers, rng)),
            StrategyKind::Etc { .. } => self.etc_recommend_batch(season, n_farmers, rng),
            StrategyKind::Oracle { optimal_arm } => Ok(vec![optimal_arm; n_farmers]),
            StrategyKind::Uniform => {
                let k = self.arms.len();
                Ok((0..n_farmers).map(|_| rng.random_range(0..k)).collect())
            }
        }
    }

    /// Appends a season's results. Nothing is applied if any reward is
    /// invalid.
    pub fn update(&mut self, results: &[(usize, f64)]) -> Result<()> {
        for &(arm, reward) in results {
            self.arms.get(arm).ok_or_else(|| Error::data(format!("unknown arm {arm}")))?.check(reward)?;
        }
        for &(arm, reward) in results {
            self.arms[arm].push(reward);
        }
        Ok(())
    }
}

/// Pull counts and running empirical regret of one farmer.
#[derive(Debug, Clone, PartialEq)]
pub struct FarmerLedger {
    pub farmer_id: usize,
    pub regret: f64,
    pub pulls: Vec<u64>,
}

impl FarmerLedger {
    pub fn new(farmer_id: usize, n_arms: usize) -> Self {
        Self { farmer_id, regret: 0.0, pulls: vec![0; n_arms] }
    }

    /// `Σ_k (max_j ĉ_j − ĉ_k) · N_k`.
    fn recompute(&mut self, cvars: &[f64]) {
        let best = cvars.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.regret = self.pulls.iter().zip(cvars).map(|(&n, &c)| (best - c) * n as f64).sum::<f64>().max(0.0);
    }
}

/// Ledgers of all farmers of one cohort, created on first participation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FarmerLedgers {
    n_arms: usize,
    ledgers: BTreeMap<usize, FarmerLedger>,
}

impl FarmerLedgers {
    pub fn new(n_arms: usize) -> Self {
        Self { n_arms, ledgers: BTreeMap::new() }
    }

    /// Ledger of a farmer, blank if the farmer never took part.
    pub fn get(&self, farmer: usize) -> FarmerLedger {
        self.ledgers.get(&farmer).cloned().unwrap_or_else(|| FarmerLedger::new(farmer, self.n_arms))
    }

    pub fn iter(&self) -> impl Iterator<Item = &FarmerLedger> {
        self.ledgers.values()
    }

    /// Adds one pull per assigned pair.
    pub fn record(&mut self, assignment: &BatchAssignment) {
        for &(farmer, arm) in &assignment.pairs {
            let n_arms = self.n_arms;
            self.ledgers.entry(farmer).or_insert_with(|| FarmerLedger::new(farmer, n_arms)).pulls[arm] += 1;
        }
    }

    /// Recomputes every regret against the current empirical CVaRs.
    pub fn refresh(&mut self, cvars: &[f64]) {
        for l in self.ledgers.values_mut() {
            l.recompute(cvars);
        }
    }
}

/// Records an assignment and recomputes all regrets from the full pull
/// histories.
pub fn update_farmer_ledgers(ledgers: &mut FarmerLedgers, assignment: &BatchAssignment, cvars: &[f64]) {
    ledgers.record(assignment);
    ledgers.refresh(cvars);
}

/// Farmer-to-arm pairs for one season, in increasing farmer id order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchAssignment {
    pub pairs: Vec<(usize, usize)>,
}

impl BatchAssignment {
    /// Pairs farmers with recommendations in the given order.
    pub fn in_order(farmers: &[usize], arm_ids: &[usize]) -> Result<Self> {
        if farmers.len() != arm_ids.len() {
            return Err(Error::domain(format!("{} farmers for {} recommendations", farmers.len(), arm_ids.len())));
        }
        let mut pairs: Vec<_> = farmers.iter().copied().zip(arm_ids.iter().copied()).collect();
        pairs.sort_unstable();
        Ok(Self { pairs })
    }

    pub fn arms(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.1)
    }
}

/// Pairs the i-th lowest-regret farmer with the i-th lowest-CVaR
/// recommendation. Equal regrets order by farmer id, equal CVaRs by arm id.
pub fn fair_assignment(
    arm_ids: &[usize],
    farmers: &[FarmerLedger],
    empirical_cvars: &[f64],
) -> Result<BatchAssignment> {
    if arm_ids.len() != farmers.len() {
        return Err(Error::domain(format!("{} farmers for {} recommendations", farmers.len(), arm_ids.len())));
    }
    if let Some(&arm) = arm_ids.iter().find(|&&a| a >= empirical_cvars.len()) {
        return Err(Error::domain(format!("arm {arm} has no empirical CVaR")));
    }
    let mut by_regret: Vec<&FarmerLedger> = farmers.iter().collect();
    by_regret.sort_by(|a, b| a.regret.total_cmp(&b.regret).then(a.farmer_id.cmp(&b.farmer_id)));
    let mut by_cvar = arm_ids.to_vec();
    by_cvar.sort_by(|&a, &b| empirical_cvars[a].total_cmp(&empirical_cvars[b]).then(a.cmp(&b)));
    let mut pairs: Vec<_> = by_regret.iter().map(|f| f.farmer_id).zip(by_cvar).collect();
    pairs.sort_unstable();
    Ok(BatchAssignment { pairs })
}
