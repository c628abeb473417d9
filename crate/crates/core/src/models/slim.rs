//! User-based SLIM with an optional group-balance penalty.

use serde::{Deserialize, Serialize};

use super::{FittedModel, ModelSpec, Parameters};
use crate::data::{GroupAssignment, InteractionSet};
use crate::error::{Error, Result};
use crate::par;

/// Per-sweep statistics of the coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlimSweep {
    pub sweep: usize,
    pub objective: f64,
    pub max_change: f64,
}

/// Per-target-user problem over `m` peers:
///
/// `1/2 |r_u - sum_v w_v r_v|^2 + l1 sum w + 1/2 l2 |w|^2 + 1/2 l_bal (p . w)^2`
/// subject to `w >= 0`, written in Gram form (`gram[a][b] = r_a . r_b`,
/// `target[a] = r_a . r_u`).
#[derive(Debug, Clone, PartialEq)]
pub struct SlimProblem {
    pub gram: Vec<f64>,
    pub target: Vec<f64>,
    pub target_norm: f64,
    pub signs: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub l_bal: f64,
}

impl SlimProblem {
    /// Builds the problem from dense rating rows: `target_row` is `r_u`,
    /// `peer_rows[a]` is `r_a`.
    pub fn from_rows(target_row: &[f64], peer_rows: &[Vec<f64>], signs: Vec<f64>, l1: f64, l2: f64, l_bal: f64) -> Self {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let m = peer_rows.len();
        let mut gram = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                gram[a * m + b] = dot(&peer_rows[a], &peer_rows[b]);
            }
        }
        Self {
            gram,
            target: peer_rows.iter().map(|r| dot(r, target_row)).collect(),
            target_norm: dot(target_row, target_row),
            signs,
            l1,
            l2,
            l_bal,
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    fn g(&self, a: usize, b: usize) -> f64 {
        self.gram[a * self.len() + b]
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        objective(self.len(), |a, b| self.g(a, b), &self.target, self.target_norm, &self.signs, w, self.l1, self.l2, self.l_bal)
    }

    /// Gradient of the smooth part plus `l1` (the subgradient for `w > 0`).
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let m = self.len();
        let s: f64 = self.signs.iter().zip(w).map(|(p, x)| p * x).sum();
        (0..m)
            .map(|a| {
                let gw: f64 = (0..m).map(|b| self.g(a, b) * w[b]).sum();
                gw - self.target[a] + self.l1 + self.l2 * w[a] + self.l_bal * self.signs[a] * s
            })
            .collect()
    }

    pub fn solve_cd(&self, max_sweeps: usize, tol: f64) -> (Vec<f64>, Vec<SlimSweep>) {
        coordinate_descent(self.len(), |a, b| self.g(a, b), &self.target, self.target_norm, &self.signs, self.l1, self.l2, self.l_bal, max_sweeps, tol, true)
    }
}

#[allow(clippy::too_many_arguments)]
fn objective(m: usize, g: impl Fn(usize, usize) -> f64, target: &[f64], target_norm: f64, signs: &[f64], w: &[f64], l1: f64, l2: f64, l_bal: f64) -> f64 {
    let active: Vec<usize> = (0..m).filter(|&a| w[a] != 0.0).collect();
    let mut quad = 0.0;
    for &a in &active {
        for &b in &active {
            quad += w[a] * w[b] * g(a, b);
        }
    }
    let lin: f64 = active.iter().map(|&a| w[a] * target[a]).sum();
    let s: f64 = active.iter().map(|&a| w[a] * signs[a]).sum();
    let l1_term: f64 = active.iter().map(|&a| w[a]).sum();
    let l2_term: f64 = active.iter().map(|&a| w[a] * w[a]).sum();
    0.5 * (target_norm - 2.0 * lin + quad) + l1 * l1_term + 0.5 * l2 * l2_term + 0.5 * l_bal * s * s
}

/// Cyclic non-negative coordinate descent. `c[a] = sum_b g(a, b) w_b` is
/// maintained incrementally so a coordinate costs O(1) unless it moves.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent(
    m: usize,
    g: impl Fn(usize, usize) -> f64,
    target: &[f64],
    target_norm: f64,
    signs: &[f64],
    l1: f64,
    l2: f64,
    l_bal: f64,
    max_sweeps: usize,
    tol: f64,
    trace: bool,
) -> (Vec<f64>, Vec<SlimSweep>) {
    let mut w = vec![0.0; m];
    let mut c = vec![0.0; m];
    let mut s = 0.0;
    let mut sweeps = Vec::new();
    let mut converged = m == 0;
    for sweep in 1..=max_sweeps {
        if converged {
            break;
        }
        let mut max_change: f64 = 0.0;
        for a in 0..m {
            let gaa = g(a, a);
            let p = signs[a];
            let denom = gaa + l2 + l_bal * p * p;
            if denom <= 0.0 {
                continue;
            }
            let num = target[a] - c[a] + w[a] * gaa - l1 - l_bal * p * (s - p * w[a]);
            let new = (num / denom).max(0.0);
            let delta = new - w[a];
            if delta != 0.0 {
                for (b, cb) in c.iter_mut().enumerate() {
                    *cb += delta * g(b, a);
                }
                s += p * delta;
                w[a] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if trace {
            sweeps.push(SlimSweep {
                sweep,
                objective: objective(m, &g, target, target_norm, signs, &w, l1, l2, l_bal),
                max_change,
            });
        }
        converged = max_change < tol;
    }
    if !converged {
        log::warn!("slim coordinate descent stopped after {max_sweeps} sweeps without converging");
    }
    (w, sweeps)
}

/// Sparse non-negative weights per target user (zero diagonal) plus the
/// train rating rows used to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlimModel {
    /// target user -> (peer user, weight), sorted by peer, never containing
    /// the target itself
    pub weights: Vec<Vec<(usize, f64)>>,
    /// user -> (item, rating), sorted by item
    user_ratings: Vec<Vec<(usize, f64)>>,
}

impl SlimModel {
    pub fn weight(&self, target: usize, peer: usize) -> f64 {
        let row = &self.weights[target];
        row.binary_search_by_key(&peer, |e| e.0).map_or(0.0, |k| row[k].1)
    }

    pub fn predict(&self, u: usize, i: usize) -> f64 {
        self.weights[u]
            .iter()
            .map(|&(v, w)| {
                let r = &self.user_ratings[v];
                w * r.binary_search_by_key(&i, |e| e.0).map_or(0.0, |k| r[k].1)
            })
            .sum()
    }

    pub fn predict_all(&self, u: usize, n_items: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_items];
        for &(v, w) in &self.weights[u] {
            for &(i, r) in &self.user_ratings[v] {
                out[i] += w * r;
            }
        }
        out
    }
}

/// Fits SLIM-U. `balance` adds the group-balance penalty with the given
/// weight; signs are +1 for group 0, -1 for group 1 and 0 for unlabeled
/// (e.g. synthetic) users. Peers of a user are the users sharing at least
/// one train item with them.
pub fn fit_slim_u(train: &InteractionSet, spec: &ModelSpec, balance: Option<(&GroupAssignment, f64)>) -> Result<FittedModel> {
    let l1 = spec.num("l1", 1.0);
    let l2 = spec.num("l2", 1.0);
    let max_sweeps = spec.int("max_sweeps", 50);
    let tol = spec.num("tol", 1e-5);
    if !(l1 >= 0.0 && l2 >= 0.0) || max_sweeps == 0 {
        return Err(Error::Config("slim_u needs l1, l2 >= 0 and max_sweeps >= 1".into()));
    }
    let l_bal = balance.map_or(0.0, |b| b.1);
    if !(l_bal >= 0.0) || !l_bal.is_finite() {
        return Err(Error::Config("lambda_bal must be finite and non-negative".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("slim_u needs a non-empty train set".into()));
    }
    let n = train.n_users();
    let mut user_ratings = vec![Vec::new(); n];
    let mut item_raters = vec![Vec::new(); train.n_items()];
    for (&(u, i), r) in train.rows().iter().zip(train.interactions()) {
        user_ratings[u].push((i, r.rating));
        item_raters[i].push((u, r.rating));
    }
    for l in &mut user_ratings {
        l.sort_by_key(|e| e.0);
    }
    let signs: Vec<f64> = train
        .users()
        .map(|u| match balance.and_then(|(g, _)| g.group_of(u)) {
            Some(0) => 1.0,
            Some(_) => -1.0,
            None => 0.0,
        })
        .collect();

    // dense user-user Gram matrix
    let gram: Vec<f64> = par::map_range(n, |a| {
        let mut row = vec![0.0; n];
        for &(i, ra) in &user_ratings[a] {
            for &(b, rb) in &item_raters[i] {
                row[b] += ra * rb;
            }
        }
        row
    })
    .into_iter()
    .flatten()
    .collect();

    let weights = par::map_range(n, |u| {
        let peers: Vec<usize> = (0..n).filter(|&v| v != u && gram[u * n + v] > 0.0).collect();
        let target: Vec<f64> = peers.iter().map(|&v| gram[v * n + u]).collect();
        let peer_signs: Vec<f64> = peers.iter().map(|&v| signs[v]).collect();
        let g = |a: usize, b: usize| gram[peers[a] * n + peers[b]];
        let (w, _) = coordinate_descent(peers.len(), g, &target, gram[u * n + u], &peer_signs, l1, l2, l_bal, max_sweeps, tol, false);
        peers.iter().zip(w).filter(|e| e.1 > 0.0).map(|(&v, x)| (v, x)).collect::<Vec<_>>()
    });
    let model = SlimModel { weights, user_ratings };
    Ok(FittedModel::from_train(spec.clone(), train, Parameters::Slim(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interaction, RatingScale};
    use crate::models::{ModelFamily, Scorer};

    fn toy() -> InteractionSet {
        let rows = [
            ("a", "x", 5.0),
            ("a", "y", 3.0),
            ("b", "x", 4.0),
            ("b", "z", 2.0),
            ("c", "y", 1.0),
            ("c", "z", 5.0),
            ("c", "x", 2.0),
            ("d", "w", 3.0),
        ];
        InteractionSet::new(rows.iter().map(|&(u, i, r)| Interaction::new(u, i, r)).collect(), RatingScale::FIVE_STAR).unwrap()
    }

    #[test]
    fn diagonal_is_zero_and_weights_non_negative() {
        let m = fit_slim_u(&toy(), &ModelSpec::new(ModelFamily::SlimU).with("l1", 0.0).with("l2", 0.1), None).unwrap();
        let s = m.slim().unwrap();
        for (u, row) in s.weights.iter().enumerate() {
            assert_eq!(s.weight(u, u), 0.0);
            assert!(row.iter().all(|e| e.1 > 0.0 && e.0 != u));
        }
        // d shares nothing with anyone
        assert!(s.weights[3].is_empty());
        assert_eq!(m.score("d", "x"), 0.0);
        assert!(!m.predicts_ratings());
    }

    #[test]
    fn predict_all_matches_predict() {
        let m = fit_slim_u(&toy(), &ModelSpec::new(ModelFamily::SlimU).with("l1", 0.1), None).unwrap();
        let s = m.slim().unwrap();
        for u in 0..4 {
            let all = s.predict_all(u, 4);
            for (i, &x) in all.iter().enumerate() {
                assert!((x - s.predict(u, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn objective_decreases_every_sweep() {
        let p = SlimProblem::from_rows(
            &[5.0, 3.0, 0.0, 1.0],
            &[vec![4.0, 0.0, 2.0, 1.0], vec![1.0, 3.0, 0.0, 0.0], vec![0.0, 2.0, 5.0, 1.0]],
            vec![1.0, -1.0, 1.0],
            0.2,
            0.1,
            3.0,
        );
        let (w, trace) = p.solve_cd(100, 1e-12);
        assert!(trace.windows(2).all(|t| t[1].objective <= t[0].objective + 1e-12));
        assert!((p.objective(&w) - trace.last().unwrap().objective).abs() < 1e-12);
        // KKT: zero gradient on the support, non-negative off it
        let g = p.gradient(&w);
        for (x, gx) in w.iter().zip(g) {
            if *x > 0.0 {
                assert!(gx.abs() < 1e-6);
            } else {
                assert!(gx > -1e-6);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = SlimProblem::from_rows(&[2.0, 1.0, 4.0], &[vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]], vec![1.0, -1.0], 0.3, 0.7, 2.0);
        let w = [0.4, 1.3];
        let g = p.gradient(&w);
        let h = 1e-6;
        for a in 0..2 {
            let mut up = w;
            up[a] += h;
            let mut down = w;
            down[a] -= h;
            let fd = (p.objective(&up) - p.objective(&down)) / (2.0 * h);
            assert!((fd - g[a]).abs() <= 1e-4 * fd.abs().max(1e-2));
        }
    }
}
