//! Two-sample tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest `|a| * |b|` for which the exact permutation distribution is used.
pub const EXACT_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MwMethod {
    /// Exact when `|a| * |b| <= EXACT_LIMIT`, normal approximation otherwise.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample (midranks for ties).
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample `a ++ b`.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&x, &y| pooled[x].total_cmp(&pooled[y]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &o in &order[start..end] {
            ranks[o] = mid;
        }
        start = end;
    }
    ranks
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Mann-Whitney needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Mann-Whitney sample contains a non-finite value".into()));
    }
    Ok(())
}

/// Mann-Whitney U test with the automatic choice of method.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    mann_whitney_with(a, b, MwMethod::Auto)
}

pub fn mann_whitney_with(a: &[f64], b: &[f64], method: MwMethod) -> Result<MannWhitney> {
    check(a, b)?;
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;
    let exact = match method {
        MwMethod::Auto => na * nb <= EXACT_LIMIT,
        MwMethod::Exact => true,
        MwMethod::Normal => false,
    };
    let p = if exact {
        exact_p(&ranks, na, rank_sum)
    } else {
        normal_p(&ranks, na, nb, u)
    };
    Ok(MannWhitney { u, p, exact })
}

/// Permutation p-value: the distribution of the rank sum of `na` elements
/// drawn from the pooled (doubled, hence integer) midranks, counted by
/// dynamic programming. Two-sided as `min(1, 2 min(P(S <= s), P(S >= s)))`.
fn exact_p(ranks: &[f64], na: usize, rank_sum: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = {
        let mut d = doubled.clone();
        d.sort_unstable_by(|x, y| y.cmp(x));
        d[..na].iter().sum()
    };
    // counts[c][s]: subsets of size c with doubled rank sum s
    let mut counts = vec![vec![0u128; max_sum + 1]; na + 1];
    counts[0][0] = 1;
    for &r in &doubled {
        for c in (1..=na).rev() {
            let (lower, upper) = counts.split_at_mut(c);
            let (from, to) = (&lower[c - 1], &mut upper[0]);
            for s in (r..=max_sum).rev() {
                to[s] += from[s - r];
            }
        }
    }
    let dist = &counts[na];
    let observed = (2.0 * rank_sum).round() as usize;
    let total: u128 = dist.iter().sum();
    let le: u128 = dist[..=observed.min(max_sum)].iter().sum();
    let ge: u128 = if observed <= max_sum { dist[observed..].iter().sum() } else { 0 };
    let tail = le.min(ge) as f64 / total as f64;
    (2.0 * tail).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(ranks: &[f64], na: usize, nb: usize, u: f64) -> f64 {
    let n = (na + nb) as f64;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    let (na, nb) = (na as f64, nb as f64);
    let mean = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("KS sample contains a non-finite value".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let effective = (n * m) as f64 / (n + m) as f64;
    Ok(KsResult {
        d,
        p: kolmogorov_survival(effective.sqrt() * d),
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
