//! Relative-MSE CDFs and family win counts over a results table.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use robust_ope::EstimatorName;
use serde::{Deserialize, Serialize};

use crate::results::ResultRow;

/// One point of `cdf.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub estimator: String,
    pub ratio: f64,
    pub cum_fraction: f64,
}

/// Rows grouped by condition id, keyed by estimator.
fn by_condition(rows: &[ResultRow]) -> BTreeMap<&str, BTreeMap<&str, f64>> {
    let mut out: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows {
        out.entry(&r.condition_id).or_default().insert(&r.estimator, r.mse);
    }
    out
}

/// `mse / baseline`, with `0 / 0 = 1` and `x / 0 = inf` for `x > 0`.
pub fn relative_mse(mse: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        if mse == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        mse / baseline
    }
}

/// For each estimator, the sorted relative MSEs against `baseline` across
/// conditions with their cumulative fractions. Estimators appear in order
/// of first occurrence.
pub fn relative_cdf(rows: &[ResultRow], baseline: &str) -> Result<Vec<CdfPoint>> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.estimator.as_str()) {
            order.push(&r.estimator);
        }
    }
    let mut ratios: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (cid, ests) in by_condition(rows) {
        let Some(&b) = ests.get(baseline) else {
            bail!("baseline `{baseline}` missing in condition {cid}");
        };
        for (&name, &mse) in &ests {
            ratios.entry(name).or_default().push(relative_mse(mse, b));
        }
    }
    let mut out = Vec::new();
    for name in order {
        let mut v = ratios.remove(name).unwrap_or_default();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        out.extend(v.into_iter().enumerate().map(|(i, ratio)| CdfPoint {
            estimator: name.to_string(),
            ratio,
            cum_fraction: (i + 1) as f64 / n,
        }));
    }
    Ok(out)
}

/// Families in tie-breaking order: on equal family MSE the earlier family
/// wins, so baselines win ties against the robust families.
pub fn family_order() -> Vec<&'static str> {
    let mut out = Vec::new();
    for n in EstimatorName::ALL {
        if !out.contains(&n.family()) {
            out.push(n.family());
        }
    }
    out
}

fn family_of(estimator: &str) -> Option<&'static str> {
    estimator.parse::<EstimatorName>().ok().map(EstimatorName::family)
}

/// Per condition, the best (lowest) MSE of each family among `families`.
fn family_scores<'a>(rows: &'a [ResultRow], families: &[&str]) -> BTreeMap<&'a str, BTreeMap<String, f64>> {
    let mut out: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for r in rows {
        let Some(f) = family_of(&r.estimator) else { continue };
        if !families.contains(&f) {
            continue;
        }
        let e = out
            .entry(&r.condition_id)
            .or_default()
            .entry(f.to_string())
            .or_insert(f64::INFINITY);
        *e = e.min(r.mse);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyCount {
    pub family: String,
    pub wins: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReport {
    pub conditions: usize,
    pub counts: Vec<FamilyCount>,
}

/// Counts the conditions in which each family has the lowest family MSE.
/// `families` restricts the competition; all families when empty. A
/// condition lacking any of the competing families is not counted.
pub fn family_report(rows: &[ResultRow], families: &[&str]) -> FamilyReport {
    let present: Vec<&str> = {
        let mut seen: Vec<&str> = rows.iter().filter_map(|r| family_of(&r.estimator)).collect();
        seen.sort();
        seen.dedup();
        seen
    };
    let competing: Vec<&str> = family_order()
        .into_iter()
        .filter(|f| if families.is_empty() { present.contains(f) } else { families.contains(f) })
        .collect();
    let scores = family_scores(rows, &competing);
    let mut wins: BTreeMap<&str, usize> = competing.iter().map(|&f| (f, 0)).collect();
    let mut conditions = 0;
    for fam in scores.values() {
        if competing.iter().any(|f| !fam.contains_key(*f)) {
            continue;
        }
        conditions += 1;
        let mut best = competing[0];
        for &f in &competing[1..] {
            if fam[f] < fam[best] {
                best = f;
            }
        }
        *wins.get_mut(best).unwrap() += 1;
    }
    let counts = competing
        .iter()
        .map(|&f| FamilyCount {
            family: f.to_string(),
            wins: wins[f],
            fraction: if conditions == 0 { 0.0 } else { wins[f] as f64 / conditions as f64 },
        })
        .collect();
    FamilyReport { conditions, counts }
}

/// Fraction of conditions (holding both families) where family `a` has a
/// strictly lower MSE than family `b`, and the number of such conditions.
pub fn pairwise_win_fraction(rows: &[ResultRow], a: &str, b: &str) -> (f64, usize) {
    let scores = family_scores(rows, &[a, b]);
    let mut n = 0;
    let mut wins = 0;
    for fam in scores.values() {
        if let (Some(x), Some(y)) = (fam.get(a), fam.get(b)) {
            n += 1;
            if x < y {
                wins += 1;
            }
        }
    }
    (if n == 0 { 0.0 } else { wins as f64 / n as f64 }, n)
}
