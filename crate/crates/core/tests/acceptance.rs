//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bcb_core::environment::{CohortSpec, DistributionSpec, Environment, Law, RewardRecord, TrueCvar};
use bcb_core::harness::{
    self, cohort_regrets, individual_regret_distribution, population_regret_curve, regret_ledgers, ExperimentConfig,
    ExperimentOutcome, RegretLedger, RegretPoint, ReplicationLog, SeasonLog, StrategyMetrics,
};
use bcb_core::metrics::{empirical_cvar, empirical_var, RiskLevel};
use bcb_core::policies::PolicyState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).expect("shipped config parses")
}

fn alpha_grid() -> Vec<RiskLevel> {
    (1..=20).map(|i| RiskLevel::new(i as f64 * 0.05).unwrap()).collect()
}

fn corpus() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..1000)
        .map(|i| {
            let n = rng.random_range(1..=500);
            match i % 4 {
                0 => (0..n).map(|_| rng.random_range(0.5..10.0)).collect(),
                1 => (0..n).map(|_| rng.random_range(1..=6) as f64 * 0.5).collect(),
                2 => (0..n)
                    .map(|_| if rng.random_bool(0.2) { rng.random_range(0.5..1.0) } else { rng.random_range(5.0..8.0) })
                    .collect(),
                _ => (0..n).map(|_| 100.0 + rng.random_range(-50.0..50.0)).collect(),
            }
        })
        .collect()
}

/// `sup_x { x - E[(x - Y)+] / α }` over the sample points.
fn brute_cvar(sample: &[f64], alpha: f64) -> f64 {
    let n = sample.len() as f64;
    sample
        .iter()
        .map(|&x| x - sample.iter().map(|&y| (x - y).max(0.0)).sum::<f64>() / (n * alpha))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn criterion_1(corpus: &[Vec<f64>]) -> Outcome {
    let grid = alpha_grid();
    let start = Instant::now();
    let ours: Vec<Vec<f64>> =
        corpus.iter().map(|s| grid.iter().map(|&a| empirical_cvar(s, a).unwrap()).collect()).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for (s, row) in corpus.iter().zip(&ours) {
        for (&a, &v) in grid.iter().zip(row) {
            worst = worst.max(rel_err(v, brute_cvar(s, a.get())));
        }
    }
    let msg = format!("max relative error {worst:.2e} over {} cases, {elapsed:.3} s", corpus.len() * grid.len());
    if worst <= 1e-12 && elapsed < 5.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_2(corpus: &[Vec<f64>]) -> Outcome {
    let mut worst = 0.0f64;
    for s in corpus {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        worst = worst.max(rel_err(empirical_cvar(s, RiskLevel::MEAN).unwrap(), mean));
    }
    let msg = format!("max relative error {worst:.2e} over {} samples", corpus.len());
    if worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_3() -> Outcome {
    let k = 10;
    let draws = 100_000;
    let state = PolicyState::bcb_init(&vec![1.0; k], RiskLevel::new(0.3).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = vec![0usize; k];
    for _ in 0..draws {
        counts[state.bcb_recommend_batch(1, &mut rng)[0]] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    let worst = freqs.iter().map(|f| (f - 0.1).abs()).fold(0.0, f64::max);
    let msg = format!(
        "frequencies {:.4}..{:.4}",
        freqs.iter().cloned().fold(1.0, f64::min),
        freqs.iter().cloned().fold(0.0, f64::max)
    );
    if worst <= 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_4() -> Outcome {
    let alpha = RiskLevel::new(0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut batches = 0;
    for k in 2..=10 {
        for n in 0..=120 {
            let t_trials = 3;
            let mut state = PolicyState::etc_init(t_trials, &vec![1.0; k], alpha).unwrap();
            for season in 1..=t_trials {
                let batch = state.etc_recommend_batch(season, n, &mut rng).unwrap();
                let mut counts = vec![0usize; k];
                batch.iter().for_each(|&a| counts[a] += 1);
                let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
                if batch.len() != n || hi - lo > 1 || (n % k == 0 && hi != lo) {
                    return Err(format!("K={k} n={n} season {season}: counts {counts:?}"));
                }
                batches += 1;
            }
        }
    }
    Ok(format!("{batches} trial batches, spread <= 1, equal when K divides n"))
}

struct Surrogate {
    metrics: Vec<StrategyMetrics>,
    elapsed: f64,
}

fn run_surrogate() -> Surrogate {
    let cfg = load("surrogate_two_cohort.json");
    let start = Instant::now();
    let exp = cfg.validate().expect("surrogate config valid");
    let outcome = harness::run_experiment(&exp, 0).expect("surrogate run");
    let report = harness::summarize(&exp, &outcome).expect("summary");
    let elapsed = start.elapsed().as_secs_f64();
    Surrogate { metrics: report.strategies, elapsed }
}

fn strategy<'a>(s: &'a Surrogate, label: &str) -> &'a StrategyMetrics {
    s.metrics.iter().find(|m| m.label == label).unwrap_or_else(|| panic!("strategy {label} in surrogate config"))
}

fn criterion_5(s: &Surrogate) -> Outcome {
    let final_regret = |label: &str| strategy(s, label).regret_curve.last().unwrap().mean;
    let (bcb, etc5) = (final_regret("BCB"), final_regret("ETC-5"));
    let reduction = 1.0 - bcb / etc5;
    let bcb_cvar = &strategy(s, "BCB").cvar_curve;
    let mut first_bad = None;
    for other in ["ETC-3", "ETC-5"] {
        for (b, o) in bcb_cvar.iter().zip(&strategy(s, other).cvar_curve) {
            if b.t >= 4 && b.cvar <= o.cvar && first_bad.is_none() {
                first_bad = Some(format!("{other} at T={}", b.t));
            }
        }
    }
    let msg = format!(
        "regret BCB {bcb:.3} vs ETC-5 {etc5:.3} ({:.1}% lower), CVaR ordering from T=4: {}, {:.2} s",
        reduction * 100.0,
        first_bad.as_deref().map_or("holds".to_string(), |b| format!("broken by {b}")),
        s.elapsed
    );
    if reduction >= 0.15 && first_bad.is_none() && s.elapsed < 60.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn p99_at(m: &StrategyMetrics, t: usize) -> f64 {
    let (_, regrets) = m.individual_regrets.iter().find(|(at, _)| *at == t).expect("individual regrets at T");
    empirical_var(regrets, RiskLevel::new(0.99).unwrap()).unwrap()
}

fn criterion_6(s: &Surrogate) -> Outcome {
    let (bcb, etc5) = (p99_at(strategy(s, "BCB"), 20), p99_at(strategy(s, "ETC-5"), 20));
    let msg = format!("p99 individual regret at T=20: BCB {bcb:.3}, ETC-5 {etc5:.3}");
    if bcb < etc5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_7() -> Outcome {
    let mut cfg = load("surrogate_two_cohort.json");
    cfg.horizon = 200;
    cfg.replications = 100;
    let bcb: Vec<_> = cfg.strategies().iter().filter(|s| s.label() == "BCB").cloned().collect();
    cfg.strategy = harness::config::Strategies::Many(bcb);
    let exp = cfg.validate().expect("long config valid");
    let outcome = harness::run_experiment(&exp, 0).expect("long run");
    let curve = population_regret_curve(&outcome.runs[0].logs, &outcome.truths).unwrap();
    let (r100, r200) = (curve[99].mean, curve[199].mean);
    let ratio = (r200 - r100) / r100;
    let msg = format!("R(100)={r100:.3}, R(200)-R(100)={:.3}, ratio {ratio:.3}", r200 - r100);
    if ratio < 0.5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn exact(value: f64) -> TrueCvar {
    TrueCvar { value, exact: true, tolerance: 0.0 }
}

fn rec(farmer: usize, cohort: usize, arm: usize) -> RewardRecord {
    RewardRecord { farmer, cohort, arm, reward: 0.5 }
}

fn log(replication: usize, seasons: Vec<Vec<RewardRecord>>) -> ReplicationLog {
    let seasons =
        seasons.into_iter().enumerate().map(|(i, records)| SeasonLog { replication, season: i + 1, records }).collect();
    ReplicationLog { replication, seasons }
}

fn criterion_8() -> Outcome {
    // Gaps: cohort 0 (p=3/4) [0, 1/2, 1/4], cohort 1 (p=1/4) [0, 1/2].
    let truths = vec![
        RegretLedger::from_cvars("a", 0.75, vec![exact(1.0), exact(0.5), exact(0.75)]),
        RegretLedger::from_cvars("b", 0.25, vec![exact(0.5), exact(0.0)]),
    ];
    let logs = vec![
        log(0, vec![vec![rec(0, 0, 1), rec(1, 0, 2), rec(3, 1, 1)], vec![rec(0, 0, 0), rec(2, 0, 1), rec(3, 1, 1)]]),
        log(1, vec![vec![rec(1, 0, 1), rec(2, 0, 1), rec(4, 1, 0)], vec![rec(0, 0, 2)]]),
    ];
    let expected = [
        RegretPoint { t: 1, mean: 0.71875, q10: 0.6875, q90: 0.75 },
        RegretPoint { t: 2, mean: 1.0625, q10: 0.9375, q90: 1.1875 },
    ];
    let curve = population_regret_curve(&logs, &truths).map_err(|e| e.to_string())?;
    if curve != expected {
        return Err(format!("population regret {curve:?}, expected {expected:?}"));
    }

    let table = |values: Vec<f64>| DistributionSpec::new(Law::EmpiricalTable { values, weights: None }, 1.0).unwrap();
    let cohorts = vec![
        CohortSpec {
            id: "a".into(),
            proportion: 0.6,
            arms: vec![table(vec![1.0]), table(vec![0.5]), table(vec![0.75])],
        },
        CohortSpec { id: "b".into(), proportion: 0.4, arms: vec![table(vec![0.5]), table(vec![0.0])] },
    ];
    let env = Environment::new(cohorts, 5).unwrap();
    let pop = env.population();
    let expected_individual = [[0.5, 0.25, 0.5, 1.0, 0.0], [0.25, 0.5, 0.5, 0.0, 0.0]];
    for t in 1..=2 {
        let individual = individual_regret_distribution(&logs, &truths, pop, t).map_err(|e| e.to_string())?;
        for (r, log) in logs.iter().enumerate() {
            let per_farmer = &individual[r * pop.len()..(r + 1) * pop.len()];
            if t == 2 && per_farmer != expected_individual[r] {
                return Err(format!("replication {r}: individual regrets {per_farmer:?}"));
            }
            let realized = cohort_regrets(log, &truths, t).map_err(|e| e.to_string())?;
            for (c, &cohort_total) in realized.iter().enumerate() {
                let summed: f64 = pop.members(c).map(|f| per_farmer[f]).sum();
                if summed != cohort_total {
                    return Err(format!("replication {r} T={t} cohort {c}: {summed} != {cohort_total}"));
                }
            }
        }
    }
    Ok("population regret matches hand values; individual regrets sum to cohort regrets".into())
}

fn report_bytes(cfg: &ExperimentConfig, threads: usize) -> Vec<(String, Vec<u8>)> {
    let exp = cfg.validate().unwrap();
    let outcome: ExperimentOutcome = harness::run_experiment(&exp, threads).unwrap();
    let report = harness::summarize(&exp, &outcome).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = harness::write_reports(&report, dir.path()).unwrap();
    paths.iter().map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap())).collect()
}

fn criterion_9() -> Outcome {
    let mut checked = 0;
    for name in ["smoke.json", "surrogate_two_cohort.json"] {
        let mut cfg = load(name);
        cfg.replications = cfg.replications.min(50);
        let reference = report_bytes(&cfg, 1);
        for threads in [1, 2, 4] {
            let again = report_bytes(&cfg, threads);
            for ((file, a), (_, b)) in reference.iter().zip(&again) {
                if a != b {
                    return Err(format!("{name}: {file} differs with {threads} threads"));
                }
            }
            checked += again.len();
        }
        if regret_ledgers(&cfg.validate().unwrap()).unwrap() != regret_ledgers(&cfg.validate().unwrap()).unwrap() {
            return Err(format!("{name}: true CVaRs not reproducible"));
        }
    }
    Ok(format!("{checked} report files byte-identical across runs and 1/2/4 threads"))
}

fn main() -> ExitCode {
    let corpus = corpus();
    let surrogate = run_surrogate();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 CVaR oracle equivalence", criterion_1(&corpus)),
        ("2 mean recovery at alpha=1", criterion_2(&corpus)),
        ("3 cold-start uniformity", criterion_3()),
        ("4 ETC equiproportionality", criterion_4()),
        ("5 ordering reproduction", criterion_5(&surrogate)),
        ("6 individual-regret tail", criterion_6(&surrogate)),
        ("7 sublinear growth", criterion_7()),
        ("8 regret identities", criterion_8()),
        ("9 determinism and parallelism-invariance", criterion_9()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
