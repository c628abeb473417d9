//! Utility and fairness metrics.

mod stats;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use stats::{kolmogorov_survival, ks_two_sample, mann_whitney, mann_whitney_with, KsResult, MannWhitney, MwMethod, EXACT_LIMIT};

use crate::data::{is_synthetic_user, GroupAssignment, InteractionSet};
use crate::error::{Error, Result};
use crate::models::{ScoreTable, TopNLists};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Topn,
    Rating,
}

impl Task {
    pub fn utility_name(self) -> &'static str {
        match self {
            Task::Topn => "NDCG",
            Task::Rating => "RMSE",
        }
    }
}

/// Per-user utility values for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerUserUtility {
    pub task: Task,
    pub values: BTreeMap<String, f64>,
}

impl PerUserUtility {
    pub fn mean(&self) -> f64 {
        self.values.values().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (u, v) in &self.values {
            let _ = writeln!(out, "{u}\t{v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Test items per real user.
fn test_items(test: &InteractionSet) -> BTreeMap<&str, Vec<&str>> {
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in test.interactions() {
        if !is_synthetic_user(&r.user) {
            out.entry(r.user.as_str()).or_default().push(r.item.as_str());
        }
    }
    out
}

/// NDCG@k with binary relevance (membership in `test`). Users without test
/// items are skipped; users with test items but no list score 0.
pub fn ndcg_at_k(recs: &TopNLists, test: &InteractionSet, k: usize) -> Result<PerUserUtility> {
    if k == 0 {
        return Err(Error::invalid("ndcg cutoff must be at least 1"));
    }
    let mut values = BTreeMap::new();
    for (user, items) in test_items(test) {
        let relevant: std::collections::HashSet<&str> = items.iter().copied().collect();
        let dcg: f64 = recs
            .get(user)
            .unwrap_or(&[])
            .iter()
            .take(k)
            .enumerate()
            .filter(|(_, (i, _))| relevant.contains(i.as_str()))
            .map(|(p, _)| 1.0 / ((p + 2) as f64).log2())
            .sum();
        let idcg: f64 = (0..k.min(relevant.len())).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
        values.insert(user.to_string(), dcg / idcg);
    }
    Ok(PerUserUtility { task: Task::Topn, values })
}

/// Per-user and overall RMSE of `scores` on `test`.
pub fn rmse(scores: &ScoreTable, test: &InteractionSet) -> Result<(PerUserUtility, f64)> {
    let mut per_user: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let (mut sse, mut n) = (0.0, 0usize);
    for r in test.interactions() {
        if is_synthetic_user(&r.user) {
            continue;
        }
        let e = r.rating - scores.try_get(&r.user, &r.item)?;
        let slot = per_user.entry(r.user.clone()).or_default();
        slot.0 += e * e;
        slot.1 += 1;
        sse += e * e;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no test pairs to evaluate".into()));
    }
    let values = per_user.into_iter().map(|(u, (s, c))| (u, (s / c as f64).sqrt())).collect();
    Ok((PerUserUtility { task: Task::Rating, values }, (sse / n as f64).sqrt()))
}

/// Splits per-user values by group; unlabeled users are ignored.
fn by_group(util: &PerUserUtility, groups: &GroupAssignment) -> Result<[Vec<f64>; 2]> {
    let mut out = [Vec::new(), Vec::new()];
    for (u, &v) in &util.values {
        if let Some(g) = groups.group_of(u) {
            out[g as usize].push(v);
        }
    }
    for (g, sample) in out.iter().enumerate() {
        if sample.is_empty() {
            return Err(Error::EmptyGroup(g as u8));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpResult {
    /// mean(group 0) - mean(group 1)
    pub dp: f64,
    pub p: f64,
}

pub fn demographic_parity(util: &PerUserUtility, groups: &GroupAssignment) -> Result<DpResult> {
    let [g0, g1] = by_group(util, groups)?;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(DpResult {
        dp: mean(&g0) - mean(&g1),
        p: mann_whitney(&g0, &g1)?.p,
    })
}

/// Which scores feed KS in the top-n task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsPopulation {
    /// Scores of the recommended items.
    #[default]
    Recommended,
    /// Scores of the test pairs.
    TestPairs,
}

/// Pooled scores of each group's recommended items.
pub fn ks_samples_recommended(recs: &TopNLists, groups: &GroupAssignment) -> [Vec<f64>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (u, list) in recs.iter() {
        if let Some(g) = groups.group_of(u) {
            out[g as usize].extend(list.iter().map(|e| e.1));
        }
    }
    out
}

/// Pooled scores of each group's pairs in `set`.
pub fn ks_samples_pairs(scores: &ScoreTable, set: &InteractionSet, groups: &GroupAssignment) -> Result<[Vec<f64>; 2]> {
    let mut out = [Vec::new(), Vec::new()];
    for r in set.interactions() {
        if let Some(g) = groups.group_of(&r.user) {
            out[g as usize].push(scores.try_get(&r.user, &r.item)?);
        }
    }
    Ok(out)
}

/// Significance marker: `^` for p < 0.01, `*` for p < 0.05.
pub fn marker(p: f64) -> &'static str {
    if p < 0.01 {
        "^"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessResult {
    pub dp: f64,
    pub dp_p_value: f64,
    pub ks: f64,
    pub ks_p_value: f64,
}

impl FairnessResult {
    pub fn compute(util: &PerUserUtility, groups: &GroupAssignment, ks_samples: &[Vec<f64>; 2]) -> Result<Self> {
        let dp = demographic_parity(util, groups)?;
        let ks = ks_two_sample(&ks_samples[0], &ks_samples[1])?;
        Ok(Self {
            dp: dp.dp,
            dp_p_value: dp.p,
            ks: ks.d,
            ks_p_value: ks.p,
        })
    }

    pub fn dp_marker(&self) -> &'static str {
        marker(self.dp_p_value)
    }

    pub fn ks_marker(&self) -> &'static str {
        marker(self.ks_p_value)
    }
}

/// Mean squared error of each group's pairs.
pub fn group_losses(scores: &ScoreTable, set: &InteractionSet, groups: &GroupAssignment) -> Result<[f64; 2]> {
    let mut acc = [(0.0, 0usize); 2];
    for r in set.interactions() {
        if let Some(g) = groups.group_of(&r.user) {
            let e = r.rating - scores.try_get(&r.user, &r.item)?;
            acc[g as usize].0 += e * e;
            acc[g as usize].1 += 1;
        }
    }
    for (g, a) in acc.iter().enumerate() {
        if a.1 == 0 {
            return Err(Error::EmptyGroup(g as u8));
        }
    }
    Ok([acc[0].0 / acc[0].1 as f64, acc[1].0 / acc[1].1 as f64])
}

/// Variance of the two group losses.
pub fn glv_from_losses(l: [f64; 2]) -> f64 {
    let mean = (l[0] + l[1]) / 2.0;
    ((l[0] - mean).powi(2) + (l[1] - mean).powi(2)) / 2.0
}

pub fn group_loss_variance(scores: &ScoreTable, set: &InteractionSet, groups: &GroupAssignment) -> Result<f64> {
    group_losses(scores, set, groups).map(glv_from_losses)
}
