//! Antidote data: synthetic users whose ratings are optimized to reduce the
//! group loss variance of an ALS model.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{synthetic_user_id, GroupAssignment, Interaction, InteractionSet, RatingScale};
use crate::error::{Error, Result};
use crate::metrics::glv_from_losses;
use crate::models::als::{normal_equations, rating_lists};
use crate::models::{fit_als, ModelFamily, ModelSpec};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntidoteSettings {
    /// Number of synthetic users.
    pub budget: usize,
    /// Initial step, in rating-scale units moved by the steepest coordinate;
    /// halved until the objective decreases.
    pub step: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Fixed quantities of the bilevel problem: base ALS factors, the real
/// ratings and group labels.
///
/// For synthetic ratings `X` (`budget x n_items`), the forward map is
/// 1. synthetic user factors `s_b = (Q'Q + reg I)^-1 Q' x_b` with base `Q`;
/// 2. item factors from a ridge solve on base real user factors plus `S`;
/// 3. real user factors from a ridge solve on the new item factors;
///
/// and the objective is the group loss variance of the real train pairs.
pub struct AntidoteProblem {
    k: usize,
    reg: f64,
    n_items: usize,
    budget: usize,
    p_base: Vec<f64>,
    /// `(Q'Q + reg I)^-1 Q'`, `k x n_items`
    synth_map: DMatrix<f64>,
    by_user: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
    user_group: Vec<Option<u8>>,
    group_pairs: [f64; 2],
    pub scale: RatingScale,
}

struct Forward {
    s: Vec<f64>,
    q: Vec<f64>,
    p: Vec<f64>,
    item_chol: Vec<Cholesky<f64, Dyn>>,
    user_chol: Vec<Cholesky<f64, Dyn>>,
    losses: [f64; 2],
}

fn chol(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    a.cholesky().ok_or_else(|| Error::NonFinite("normal equations are not positive definite".into()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl AntidoteProblem {
    /// Fits the base ALS model and sets up the problem.
    pub fn new(train: &InteractionSet, groups: &GroupAssignment, spec: &ModelSpec, budget: usize) -> Result<Self> {
        if spec.family != ModelFamily::Als {
            return Err(Error::Incompatible(format!("antidote needs als, got {}", spec.family)));
        }
        let base = fit_als(train, spec)?;
        let f = base.factors().expect("als yields factors");
        let (k, reg) = (f.k, spec.num("reg", 0.1));
        let n_items = train.n_items();
        let q = DMatrix::from_row_slice(n_items, k, &f.q);
        let m = q.transpose() * &q + DMatrix::identity(k, k) * reg;
        let synth_map = chol(m)?.solve(&q.transpose());
        let (by_user, by_item) = rating_lists(train);
        let user_group: Vec<Option<u8>> = train.users().map(|u| groups.group_of(u)).collect();
        let mut group_pairs = [0.0; 2];
        for &(u, _) in train.rows() {
            if let Some(g) = user_group[u] {
                group_pairs[g as usize] += 1.0;
            }
        }
        if group_pairs[0] == 0.0 || group_pairs[1] == 0.0 {
            return Err(Error::EmptyGroup(if group_pairs[0] == 0.0 { 0 } else { 1 }));
        }
        Ok(Self {
            k,
            reg,
            n_items,
            budget,
            p_base: f.p.clone(),
            synth_map,
            by_user,
            by_item,
            user_group,
            group_pairs,
            scale: train.scale(),
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    fn forward(&self, x: &[f64]) -> Result<Forward> {
        let (k, b) = (self.k, self.budget);
        let mut s = vec![0.0; b * k];
        for row in 0..b {
            let xb = DVector::from_column_slice(&x[row * self.n_items..(row + 1) * self.n_items]);
            let sb = &self.synth_map * xb;
            s[row * k..(row + 1) * k].copy_from_slice(sb.as_slice());
        }
        let mut synth_gram = DMatrix::<f64>::zeros(k, k);
        for row in 0..b {
            let sb = DVector::from_column_slice(&s[row * k..(row + 1) * k]);
            synth_gram += &sb * sb.transpose();
        }
        let items = par::try_map_range(self.n_items, |i| {
            let (a, mut c) = normal_equations(&self.by_item[i], &self.p_base, k, self.reg);
            for row in 0..b {
                let xbi = x[row * self.n_items + i];
                for f in 0..k {
                    c[f] += xbi * s[row * k + f];
                }
            }
            let ch = chol(a + &synth_gram)?;
            let qi = ch.solve(&c);
            Ok::<_, Error>((ch, qi.as_slice().to_vec()))
        })?;
        let (item_chol, q): (Vec<_>, Vec<_>) = items.into_iter().unzip();
        let q: Vec<f64> = q.into_iter().flatten().collect();
        let users = par::try_map_range(self.by_user.len(), |u| {
            let (a, c) = normal_equations(&self.by_user[u], &q, k, self.reg);
            let ch = chol(a)?;
            let pu = ch.solve(&c);
            Ok::<_, Error>((ch, pu.as_slice().to_vec()))
        })?;
        let (user_chol, p): (Vec<_>, Vec<_>) = users.into_iter().unzip();
        let p: Vec<f64> = p.into_iter().flatten().collect();
        let mut sse = [0.0; 2];
        for (u, list) in self.by_user.iter().enumerate() {
            if let Some(g) = self.user_group[u] {
                for &(i, r) in list {
                    sse[g as usize] += (r - dot(&p[u * k..(u + 1) * k], &q[i * k..(i + 1) * k])).powi(2);
                }
            }
        }
        Ok(Forward {
            s,
            q,
            p,
            item_chol,
            user_chol,
            losses: [sse[0] / self.group_pairs[0], sse[1] / self.group_pairs[1]],
        })
    }

    /// Group losses of the real train pairs under the forward map.
    pub fn losses(&self, x: &[f64]) -> Result<[f64; 2]> {
        self.forward(x).map(|f| f.losses)
    }

    pub fn glv(&self, x: &[f64]) -> Result<f64> {
        self.losses(x).map(glv_from_losses)
    }

    /// Gradient of [`Self::glv`] with respect to `x`, by reverse-mode
    /// implicit differentiation through the ridge solves.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let fw = self.forward(x)?;
        let (k, b, n_items) = (self.k, self.budget, self.n_items);
        let diff = fw.losses[0] - fw.losses[1];
        let coeff = [diff / 2.0, -diff / 2.0];

        // adjoints of p' and the direct part of q'
        let mut gq = vec![0.0; n_items * k];
        let mut gp = vec![0.0; self.by_user.len() * k];
        for (u, list) in self.by_user.iter().enumerate() {
            let Some(g) = self.user_group[u] else { continue };
            let w = coeff[g as usize] * -2.0 / self.group_pairs[g as usize];
            let pu = &fw.p[u * k..(u + 1) * k];
            for &(i, r) in list {
                let qi = &fw.q[i * k..(i + 1) * k];
                let e = r - dot(pu, qi);
                for f in 0..k {
                    gp[u * k + f] += w * e * qi[f];
                    gq[i * k + f] += w * e * pu[f];
                }
            }
        }
        // through p'_u = A_u^-1 sum_i r q_i
        for (u, list) in self.by_user.iter().enumerate() {
            let g = DVector::from_column_slice(&gp[u * k..(u + 1) * k]);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let lam = fw.user_chol[u].solve(&g);
            let y = &fw.p[u * k..(u + 1) * k];
            for &(i, r) in list {
                let qi = &fw.q[i * k..(i + 1) * k];
                let (qy, ql) = (dot(qi, y), dot(qi, lam.as_slice()));
                for f in 0..k {
                    gq[i * k + f] += r * lam[f] - qy * lam[f] - ql * y[f];
                }
            }
        }
        // through q'_i = A_i^-1 (sum r p_u + sum_b x_bi s_b)
        let mut gx = vec![0.0; b * n_items];
        let mut gs = vec![0.0; b * k];
        for i in 0..n_items {
            let g = DVector::from_column_slice(&gq[i * k..(i + 1) * k]);
            let mu = fw.item_chol[i].solve(&g);
            let qi = &fw.q[i * k..(i + 1) * k];
            for row in 0..b {
                let sb = &fw.s[row * k..(row + 1) * k];
                let xbi = x[row * n_items + i];
                gx[row * n_items + i] += dot(mu.as_slice(), sb);
                let (sq, sm) = (dot(sb, qi), dot(sb, mu.as_slice()));
                for f in 0..k {
                    gs[row * k + f] += xbi * mu[f] - sq * mu[f] - sm * qi[f];
                }
            }
        }
        // through s_b = synth_map x_b
        for row in 0..b {
            let g = DVector::from_column_slice(&gs[row * k..(row + 1) * k]);
            let back = self.synth_map.transpose() * g;
            for i in 0..n_items {
                gx[row * n_items + i] += back[i];
            }
        }
        if gx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("antidote gradient".into()));
        }
        Ok(gx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntidoteOutcome {
    /// Train set plus the synthetic users.
    pub set: InteractionSet,
    /// GLV under the forward map after each accepted iteration, starting
    /// with the initial ratings.
    pub glv_trace: Vec<f64>,
}

impl AntidoteOutcome {
    pub fn glv_before(&self) -> f64 {
        self.glv_trace[0]
    }

    pub fn glv_after(&self) -> f64 {
        *self.glv_trace.last().unwrap()
    }
}

/// Appends `budget` synthetic users rating every item, optimized by projected
/// gradient descent with backtracking. Initial ratings are the global mean
/// plus a seeded jitter of 0.1% of the scale width, so synthetic users are
/// not exact copies of each other.
pub fn antidote_augment(train: &InteractionSet, groups: &GroupAssignment, spec: &ModelSpec, settings: AntidoteSettings) -> Result<AntidoteOutcome> {
    if settings.budget == 0 {
        if settings.iterations > 0 {
            log::warn!("antidote with budget 0 is a no-op");
        }
        return Ok(AntidoteOutcome {
            set: train.clone(),
            glv_trace: Vec::new(),
        });
    }
    if !(settings.step > 0.0) || !settings.step.is_finite() {
        return Err(Error::Config("antidote step must be positive".into()));
    }
    let problem = AntidoteProblem::new(train, groups, spec, settings.budget)?;
    let scale = problem.scale;
    let mean = train.mean_rating().ok_or_else(|| Error::Empty("empty train set".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let jitter = 1e-3 * (scale.hi - scale.lo);
    let mut x: Vec<f64> = (0..settings.budget * problem.n_items)
        .map(|_| scale.clamp(mean + rng.random_range(-jitter..=jitter)))
        .collect();
    let mut current = problem.glv(&x)?;
    let mut trace = vec![current];
    for it in 0..settings.iterations {
        let mut g = problem.gradient(&x)?;
        let largest = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if largest == 0.0 {
            break;
        }
        // the step moves the steepest rating by `step` scale units
        g.iter_mut().for_each(|v| *v /= largest);
        let mut step = settings.step;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(v, d)| scale.clamp(v - step * d)).collect();
            let value = problem.glv(&cand)?;
            if value < current {
                x = cand;
                current = value;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            log::info!("antidote stopped after {it} iterations: no decreasing step");
            break;
        }
        trace.push(current);
    }
    let items: Vec<&str> = train.items().collect();
    let mut rows = Vec::with_capacity(x.len());
    for b in 0..settings.budget {
        for (i, item) in items.iter().enumerate() {
            rows.push(Interaction::new(synthetic_user_id(b), *item, x[b * items.len() + i]));
        }
    }
    let synthetic = InteractionSet::new(rows, scale)?;
    Ok(AntidoteOutcome {
        set: train.concat(&synthetic)?,
        glv_trace: trace,
    })
}
