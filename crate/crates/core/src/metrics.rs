//! Risk measures and agronomic indicators.
//!
//! Everything here is a pure function of its inputs. Samples are never
//! mutated; the estimators sort a private copy.
//!
//! The empirical estimators use the `⌈αn⌉`-th order statistic (1-based) as
//! the quantile, without interpolation:
//!
//! ```text
//! q        = y_(⌈αn⌉)
//! CVaR_α   = q − (1 / (nα)) · Σ_i max(q − y_i, 0)
//! ```
//!
//! which is the exact lower-tail mean of the empirical law of the sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Risk level `α ∈ (0, 1]`. `α = 1` turns every CVaR into a plain mean.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::config(format!("alpha must lie in (0,1], got {alpha}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The mean (`α = 1`).
    pub const MEAN: RiskLevel = RiskLevel(1.0);
}

impl TryFrom<f64> for RiskLevel {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        RiskLevel::new(value)
    }
}

impl From<RiskLevel> for f64 {
    fn from(level: RiskLevel) -> f64 {
        level.0
    }
}

/// One field observation: yields with and without the practice, the
/// nitrogen it applied and the reference efficiency it is judged against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldRecord {
    /// Yield with the practice (kg/ha).
    pub yield_practice: f64,
    /// Control yield without nitrogen (kg/ha).
    pub yield_control: f64,
    /// Nitrogen applied (kg N/ha).
    pub n_applied: f64,
    /// Reference agronomic efficiency (kg grain / kg N).
    pub ane_ref: f64,
}

impl YieldRecord {
    pub fn new(yield_practice: f64, yield_control: f64, n_applied: f64, ane_ref: f64) -> Result<Self> {
        if !(n_applied >= 0.0) {
            return Err(Error::domain(format!("nitrogen applied must be >= 0, got {n_applied}")));
        }
        if !(ane_ref > 0.0) {
            return Err(Error::domain(format!("reference efficiency must be > 0, got {ane_ref}")));
        }
        Ok(Self { yield_practice, yield_control, n_applied, ane_ref })
    }

    pub fn yield_gain(&self) -> f64 {
        self.yield_practice - self.yield_control
    }
}

/// Agronomic nitrogen use efficiency: yield gain per kg of nitrogen.
pub fn agronomic_efficiency(rec: &YieldRecord) -> Result<f64> {
    if rec.n_applied == 0.0 {
        return Err(Error::domain("efficiency undefined for zero nitrogen"));
    }
    Ok(rec.yield_gain() / rec.n_applied)
}

/// Yield excess in kg/ha: the gain minus what the applied nitrogen would
/// have produced at the reference efficiency. Defined for `n_applied = 0`.
pub fn yield_excess(rec: &YieldRecord) -> f64 {
    rec.yield_gain() - rec.n_applied * rec.ane_ref
}

/// Multiplicative form `gain · (1 − ane_ref / ANE)`. Only defined when the
/// efficiency is defined and non-zero; agrees with [`yield_excess`] there.
pub fn yield_excess_from_efficiency(rec: &YieldRecord) -> Result<f64> {
    let ane = agronomic_efficiency(rec)?;
    if ane == 0.0 {
        return Err(Error::domain("multiplicative yield excess undefined for zero efficiency"));
    }
    Ok(rec.yield_gain() * (1.0 - rec.ane_ref / ane))
}

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::domain("empty sample"));
    }
    if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("non-finite value {bad} in sample")));
    }
    Ok(())
}

fn sorted_copy(sample: &[f64]) -> Vec<f64> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
}

/// 1-based rank `⌈αn⌉` of the empirical quantile, clamped to `[1, n]`.
pub fn quantile_rank(n: usize, level: RiskLevel) -> usize {
    let rank = (level.get() * n as f64).ceil() as usize;
    rank.clamp(1, n)
}

/// Empirical value-at-risk: the `⌈αn⌉`-th smallest value.
pub fn empirical_var(sample: &[f64], level: RiskLevel) -> Result<f64> {
    check_sample(sample)?;
    let sorted = sorted_copy(sample);
    Ok(sorted[quantile_rank(sorted.len(), level) - 1])
}

/// Empirical CVaR of an unsorted sample.
pub fn empirical_cvar(sample: &[f64], level: RiskLevel) -> Result<f64> {
    check_sample(sample)?;
    Ok(empirical_cvar_sorted(&sorted_copy(sample), level))
}

/// Empirical CVaR of a sample already sorted in increasing order.
///
/// Only the values below the quantile contribute, so the sum stops at the
/// quantile rank. Panics on an empty slice.
pub fn empirical_cvar_sorted(sorted: &[f64], level: RiskLevel) -> f64 {
    assert!(!sorted.is_empty(), "empirical CVaR of an empty sample");
    let n = sorted.len();
    let alpha = level.get();
    let q = sorted[quantile_rank(n, level) - 1];
    let shortfall: f64 = sorted.iter().take_while(|&&y| y < q).map(|&y| q - y).sum();
    let cvar = q - shortfall / (n as f64 * alpha);
    // Rounding can push the mean of a constant sample a hair outside the range.
    cvar.clamp(sorted[0], q)
}

/// Mean of the lowest `alpha` probability mass of a collection of atoms
/// given in increasing value order. The boundary atom is split so that the
/// tail mass is exactly `alpha`. Atoms beyond the tail are never visited, so
/// the total mass only needs to reach `alpha`.
fn lower_tail_mean(atoms: impl IntoIterator<Item = (f64, f64)>, alpha: f64) -> f64 {
    let mut remaining = alpha;
    let mut acc = 0.0;
    let mut last = f64::NAN;
    for (value, mass) in atoms {
        last = value;
        if mass <= 0.0 {
            continue;
        }
        let take = mass.min(remaining);
        acc += take * value;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    if remaining > 0.0 {
        // Float shortfall of the total mass: the largest atom absorbs it.
        acc += remaining * last;
    }
    acc / alpha
}

/// Exact CVaR of a finitely supported law given as `(value, probability)`
/// atoms in any order.
pub fn true_cvar_finite(atoms: &[(f64, f64)], level: RiskLevel) -> Result<f64> {
    if atoms.is_empty() {
        return Err(Error::domain("law without atoms"));
    }
    for &(value, p) in atoms {
        if !value.is_finite() || !p.is_finite() || p < 0.0 {
            return Err(Error::domain(format!("invalid atom ({value}, {p})")));
        }
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!("atom probabilities sum to {total}, not 1")));
    }
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(lower_tail_mean(sorted, level.get()))
}

/// Distribution-free confidence interval for the CVaR of a law supported on
/// `[lo, hi]`, built from the Dvoretzky–Kiefer–Wolfowitz band.
///
/// With `ε = sqrt(ln(1/δ) / (2n))`, the true CDF lies above `F_n − ε` (and
/// below `F_n + ε`) with probability at least `1 − δ` each. The lower bound
/// is the CVaR of the law obtained by moving mass `ε` from the top of the
/// sample to `lo`; the upper bound moves mass `ε` from the bottom to `hi`.
/// Both bounds bracket [`empirical_cvar`] and the width is `O(ε)`.
pub fn cvar_confidence_interval(sample: &[f64], level: RiskLevel, delta: f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    check_sample(sample)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::domain(format!("invalid support bounds [{lo}, {hi}]")));
    }
    if let Some(v) = sample.iter().find(|&&v| v < lo || v > hi) {
        return Err(Error::domain(format!("sample value {v} outside declared bounds [{lo}, {hi}]")));
    }
    let sorted = sorted_copy(sample);
    Ok(cvar_interval_sorted(&sorted, level, delta, lo, hi))
}

/// [`cvar_confidence_interval`] for a sorted sample already known to lie in
/// `[lo, hi]`.
pub fn cvar_interval_sorted(sorted: &[f64], level: RiskLevel, delta: f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = sorted.len();
    let alpha = level.get();
    let eps = ((1.0 / delta).ln() / (2.0 * n as f64)).sqrt().min(1.0);
    let w = 1.0 / n as f64;

    let lower = lower_tail_mean(std::iter::once((lo, eps)).chain(sorted.iter().map(|&y| (y, w))), alpha);

    // Drop the lowest ε of mass, then add ε at hi.
    let mut skip = eps;
    let trimmed = sorted.iter().filter_map(move |&y| {
        if skip <= 0.0 {
            return Some((y, w));
        }
        let cut = skip.min(w);
        skip -= cut;
        (w - cut > 0.0).then_some((y, w - cut))
    });
    let upper = lower_tail_mean(trimmed.chain(std::iter::once((hi, eps))), alpha);

    let point = empirical_cvar_sorted(sorted, level);
    (lower.min(point), upper.max(point))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn one_to_ten() -> Vec<f64> {
        (1..=10).map(f64::from).collect()
    }

    #[test]
    fn efficiency_examples() {
        let r = YieldRecord::new(1500.0, 1000.0, 20.0, 15.0).unwrap();
        assert_eq!(agronomic_efficiency(&r).unwrap(), 25.0);
        let r = YieldRecord::new(2000.0, 500.0, 60.0, 15.0).unwrap();
        assert_eq!(agronomic_efficiency(&r).unwrap(), 25.0);
        let r = YieldRecord::new(900.0, 900.0, 60.0, 15.0).unwrap();
        assert_eq!(agronomic_efficiency(&r).unwrap(), 0.0);
    }

    #[test]
    fn efficiency_rejects_zero_nitrogen() {
        let r = YieldRecord::new(1500.0, 1000.0, 0.0, 15.0).unwrap();
        let err = agronomic_efficiency(&r).unwrap_err();
        assert!(err.to_string().contains("efficiency undefined for zero nitrogen"));
    }

    #[test]
    fn yield_record_validation() {
        assert!(YieldRecord::new(1.0, 0.0, -1.0, 15.0).is_err());
        assert!(YieldRecord::new(1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn yield_excess_examples() {
        let r = YieldRecord::new(1500.0, 1000.0, 20.0, 15.0).unwrap();
        assert_eq!(yield_excess(&r), 200.0);
        assert!((yield_excess_from_efficiency(&r).unwrap() - 200.0).abs() < 1e-9);

        let r = YieldRecord::new(2500.0, 1000.0, 60.0, 15.0).unwrap();
        assert_eq!(yield_excess(&r), 600.0);
        assert!((yield_excess_from_efficiency(&r).unwrap() - 600.0).abs() < 1e-9);

        let r = YieldRecord::new(1900.0, 1000.0, 60.0, 15.0).unwrap();
        assert_eq!(yield_excess(&r), 0.0);

        // Zero nitrogen: additive form still defined.
        let r = YieldRecord::new(1200.0, 1000.0, 0.0, 15.0).unwrap();
        assert_eq!(yield_excess(&r), 200.0);
    }

    #[test]
    fn yield_excess_sign_follows_efficiency() {
        for gain in [10.0, 100.0, 800.0, 3000.0] {
            for n in [5.0, 20.0, 60.0, 120.0] {
                let r = YieldRecord::new(1000.0 + gain, 1000.0, n, 15.0).unwrap();
                let ane = agronomic_efficiency(&r).unwrap();
                assert_eq!(yield_excess(&r) > 0.0, ane > 15.0, "gain {gain} n {n}");
            }
        }
    }

    #[test]
    fn var_examples() {
        assert_eq!(empirical_var(&one_to_ten(), lvl(0.3)).unwrap(), 3.0);
        assert_eq!(empirical_var(&[4.2], lvl(0.01)).unwrap(), 4.2);
        assert_eq!(empirical_var(&one_to_ten(), lvl(1.0)).unwrap(), 10.0);
        assert!(empirical_var(&[], lvl(0.5)).is_err());
    }

    #[test]
    fn var_ignores_input_order() {
        let shuffled = [7.0, 2.0, 10.0, 1.0, 5.0, 3.0, 9.0, 4.0, 8.0, 6.0];
        assert_eq!(empirical_var(&shuffled, lvl(0.3)).unwrap(), 3.0);
    }

    #[test]
    fn cvar_examples() {
        assert_eq!(empirical_cvar(&[1.0, 2.0, 3.0], lvl(1.0)).unwrap(), 2.0);
        assert!((empirical_cvar(&one_to_ten(), lvl(0.3)).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(empirical_cvar(&[-3.5], lvl(0.2)).unwrap(), -3.5);
        assert!(empirical_cvar(&[], lvl(0.5)).is_err());
        assert!(empirical_cvar(&[1.0, f64::NAN], lvl(0.5)).is_err());
    }

    #[test]
    fn cvar_does_not_mutate_input() {
        let sample = vec![3.0, 1.0, 2.0];
        let _ = empirical_cvar(&sample, lvl(0.5)).unwrap();
        assert_eq!(sample, vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn risk_level_domain() {
        assert!(RiskLevel::new(0.0).is_err());
        assert!(RiskLevel::new(1.0 + 1e-9).is_err());
        assert!(RiskLevel::new(f64::NAN).is_err());
        let msg = RiskLevel::new(0.0).unwrap_err().to_string();
        assert!(msg.contains("alpha must lie in (0,1]"));
        assert_eq!(RiskLevel::new(1.0).unwrap(), RiskLevel::MEAN);
    }

    #[test]
    fn true_cvar_examples() {
        let even = [(0.0, 0.5), (10.0, 0.5)];
        assert_eq!(true_cvar_finite(&even, lvl(1.0)).unwrap(), 5.0);
        assert_eq!(true_cvar_finite(&even, lvl(0.5)).unwrap(), 0.0);
        let skew = [(10.0, 0.75), (0.0, 0.25)];
        assert!((true_cvar_finite(&skew, lvl(0.5)).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn true_cvar_rejects_unnormalized() {
        assert!(true_cvar_finite(&[(0.0, 0.5), (1.0, 0.4)], lvl(0.5)).is_err());
        assert!(true_cvar_finite(&[(0.0, -0.5), (1.0, 1.5)], lvl(0.5)).is_err());
        assert!(true_cvar_finite(&[], lvl(0.5)).is_err());
    }

    #[test]
    fn empirical_matches_true_on_uniform_atoms() {
        // The empirical law of a sample is a finite law with atoms 1/n.
        let s = [4.0, -1.0, 2.5, 7.0, 2.5, 0.0, 3.0];
        let atoms: Vec<_> = s.iter().map(|&v| (v, 1.0 / 7.0)).collect();
        for a in [0.05, 0.2, 1.0 / 7.0, 0.5, 0.9, 1.0] {
            let e = empirical_cvar(&s, lvl(a)).unwrap();
            let t = true_cvar_finite(&atoms, lvl(a)).unwrap();
            assert!((e - t).abs() < 1e-9, "alpha {a}: {e} vs {t}");
        }
    }

    #[test]
    fn interval_brackets_point_estimate() {
        let s = [0.1, 0.5, 0.2, 0.9, 0.7];
        let (lo, hi) = cvar_confidence_interval(&s, lvl(0.4), 0.05, 0.0, 1.0).unwrap();
        let point = empirical_cvar(&s, lvl(0.4)).unwrap();
        assert!(lo <= point && point <= hi);
        assert!(lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn interval_collapses_as_delta_approaches_one() {
        let s: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let point = empirical_cvar(&s, lvl(0.3)).unwrap();
        let (lo, hi) = cvar_confidence_interval(&s, lvl(0.3), 1.0 - 1e-12, 0.0, 1.0).unwrap();
        assert!((hi - lo) < 1e-4, "width {}", hi - lo);
        assert!((lo - point).abs() < 1e-4 && (hi - point).abs() < 1e-4);
    }

    #[test]
    fn interval_rejects_out_of_bounds_samples() {
        assert!(cvar_confidence_interval(&[0.5, 1.5], lvl(0.3), 0.05, 0.0, 1.0).is_err());
        assert!(cvar_confidence_interval(&[0.5], lvl(0.3), 0.0, 0.0, 1.0).is_err());
        assert!(cvar_confidence_interval(&[0.5], lvl(0.3), 1.0, 0.0, 1.0).is_err());
        assert!(cvar_confidence_interval(&[0.5], lvl(0.3), 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn interval_large_alpha_saturates_at_bounds() {
        // One observation: ε = sqrt(ln 20 / 2) > 1 is clamped, so the band is the whole support.
        let (lo, hi) = cvar_confidence_interval(&[0.5], lvl(0.3), 0.05, 0.0, 1.0).unwrap();
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
    }
}
