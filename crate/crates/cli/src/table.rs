//! Text rendering of the report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use bcb_core::harness::format_sig;
use bcb_core::harness::report::{CVAR_CURVE, INDIVIDUAL_REGRET, PROPORTIONS, REGRET_CURVE};
use bcb_core::metrics::{empirical_var, RiskLevel};

use crate::Metric;

fn read_rows(dir: &Path, name: &str) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let path = dir.join(name);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = reader.headers().map_err(|e| format!("{}: {e}", path.display()))?.iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str, file: &str) -> Result<usize, String> {
    header.iter().position(|h| h == name).ok_or_else(|| format!("{file}: missing column {name}"))
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header);
    for row in rows {
        line(row);
    }
    out
}

fn parse_t(cell: &str) -> Result<usize, String> {
    cell.parse().map_err(|_| format!("bad season value {cell:?}"))
}

/// Renders `metric` from the tables in `dir`, optionally restricted to one
/// season and (for proportions) one cohort.
pub fn render(dir: &Path, metric: Metric, at: Option<usize>, cohort: Option<&str>) -> Result<String, String> {
    let keep_t = |t: usize| at.is_none_or(|a| a == t);
    match metric {
        Metric::Cvar | Metric::Regret => {
            let file = if metric == Metric::Cvar { CVAR_CURVE } else { REGRET_CURVE };
            let (header, rows) = read_rows(dir, file)?;
            let t_col = column(&header, "T", file)?;
            let mut kept = Vec::new();
            for row in rows {
                if keep_t(parse_t(&row[t_col])?) {
                    kept.push(row);
                }
            }
            if kept.is_empty() && at.is_some() {
                return Err(format!("{file}: no rows at T={}", at.unwrap_or_default()));
            }
            Ok(aligned(&header, &kept))
        }
        Metric::Proportions => {
            let (header, rows) = read_rows(dir, PROPORTIONS)?;
            let t_col = column(&header, "T", PROPORTIONS)?;
            let c_col = column(&header, "cohort", PROPORTIONS)?;
            let mut kept = Vec::new();
            for row in rows {
                if keep_t(parse_t(&row[t_col])?) && cohort.is_none_or(|c| c == row[c_col]) {
                    kept.push(row);
                }
            }
            if kept.is_empty() && cohort.is_some() {
                return Err(format!("{PROPORTIONS}: no rows for cohort {}", cohort.unwrap_or_default()));
            }
            Ok(aligned(&header, &kept))
        }
        Metric::Individual => {
            let (header, rows) = read_rows(dir, INDIVIDUAL_REGRET)?;
            let s_col = column(&header, "strategy", INDIVIDUAL_REGRET)?;
            let t_col = column(&header, "T", INDIVIDUAL_REGRET)?;
            let v_col = column(&header, "farmer_regret", INDIVIDUAL_REGRET)?;
            // Keyed by (first appearance, strategy, T) to keep file order.
            let mut groups: BTreeMap<(usize, String, usize), Vec<f64>> = BTreeMap::new();
            let mut order: Vec<String> = Vec::new();
            for row in rows {
                let t = parse_t(&row[t_col])?;
                if !keep_t(t) {
                    continue;
                }
                let v: f64 = row[v_col].parse().map_err(|_| format!("bad regret value {:?}", row[v_col]))?;
                let idx = match order.iter().position(|s| *s == row[s_col]) {
                    Some(i) => i,
                    None => {
                        order.push(row[s_col].clone());
                        order.len() - 1
                    }
                };
                groups.entry((idx, row[s_col].clone(), t)).or_default().push(v);
            }
            let header: Vec<String> =
                ["strategy", "T", "n", "mean", "q50", "q90", "q99", "max"].iter().map(|s| s.to_string()).collect();
            let q = |v: &[f64], a: f64| {
                empirical_var(v, RiskLevel::new(a).expect("valid level")).map(format_sig).unwrap_or_default()
            };
            let rows: Vec<Vec<String>> = groups
                .into_iter()
                .map(|((_, s, t), v)| {
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    vec![
                        s,
                        t.to_string(),
                        v.len().to_string(),
                        format_sig(mean),
                        q(&v, 0.5),
                        q(&v, 0.9),
                        q(&v, 0.99),
                        q(&v, 1.0),
                    ]
                })
                .collect();
            Ok(aligned(&header, &rows))
        }
    }
}
