//! Alternating least squares on observed entries.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FactorModel, FittedModel, MfVariant, ModelSpec, Parameters};
use crate::data::InteractionSet;
use crate::error::{Error, Result};
use crate::par;

/// Per-sweep training statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsSweep {
    pub sweep: usize,
    pub rmse: f64,
    pub objective: f64,
}

/// Normal-equation matrix `A = sum_j y_j y_j^T + reg I` and right-hand side
/// `b = sum_j r_j y_j` for one row, where `y_j` are rows of `other`.
pub fn normal_equations(ratings: &[(usize, f64)], other: &[f64], k: usize, reg: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::<f64>::identity(k, k) * reg;
    let mut b = DVector::<f64>::zeros(k);
    for &(j, r) in ratings {
        let y = &other[j * k..(j + 1) * k];
        for x in 0..k {
            b[x] += r * y[x];
            for z in 0..k {
                a[(x, z)] += y[x] * y[z];
            }
        }
    }
    (a, b)
}

/// Solves a symmetric positive definite system.
pub fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::NonFinite("normal equations are not positive definite".into()))
}

/// Ridge solution for every row given the other side's factors, row-major.
pub fn solve_side(lists: &[Vec<(usize, f64)>], other: &[f64], k: usize, reg: f64) -> Result<Vec<f64>> {
    let rows = par::try_map_range(lists.len(), |n| {
        let (a, b) = normal_equations(&lists[n], other, k, reg);
        spd_solve(a, &b).map(|x| x.as_slice().to_vec())
    })?;
    Ok(rows.into_iter().flatten().collect())
}

fn stats(m: &FactorModel, train: &InteractionSet, reg: f64) -> (f64, f64) {
    let sse: f64 = train
        .rows()
        .iter()
        .zip(train.interactions())
        .map(|(&(u, i), r)| (r.rating - m.predict(u, i)).powi(2))
        .sum();
    let norm: f64 = m.p.iter().chain(&m.q).map(|x| x * x).sum();
    ((sse / train.len() as f64).sqrt(), 0.5 * sse + 0.5 * reg * norm)
}

/// Per-user and per-item rating lists of `train`, as `(other index, rating)`.
pub fn rating_lists(train: &InteractionSet) -> (Vec<Vec<(usize, f64)>>, Vec<Vec<(usize, f64)>>) {
    let mut by_user = vec![Vec::new(); train.n_users()];
    let mut by_item = vec![Vec::new(); train.n_items()];
    for (&(u, i), r) in train.rows().iter().zip(train.interactions()) {
        by_user[u].push((i, r.rating));
        by_item[i].push((u, r.rating));
    }
    (by_user, by_item)
}

/// ALS fit returning the statistics after every sweep. One sweep solves
/// user factors then item factors. Minimizes
/// `1/2 sum (r - p_u . q_i)^2 + 1/2 reg (|P|^2 + |Q|^2)`; stops after
/// `epochs` sweeps or when the train RMSE improves by less than `tol`.
pub fn fit_als_traced(train: &InteractionSet, spec: &ModelSpec) -> Result<(FittedModel, Vec<AlsSweep>)> {
    let k = spec.int("factors", 10);
    let reg = spec.num("reg", 0.1);
    let epochs = spec.int("epochs", 15);
    let tol = spec.num("tol", 1e-6);
    let init_scale = spec.num("init_scale", 0.1);
    if k == 0 || epochs == 0 || !(reg > 0.0) {
        return Err(Error::Config("als needs factors, epochs >= 1 and reg > 0".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("als needs a non-empty train set".into()));
    }
    let (by_user, by_item) = rating_lists(train);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut m = FactorModel::zeros(MfVariant::Funk, k, train.n_users(), train.n_items());
    let bound = init_scale / (k as f64).sqrt();
    for x in m.q.iter_mut() {
        *x = if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
    }
    let mut trace = Vec::new();
    let mut previous = f64::INFINITY;
    for sweep in 1..=epochs {
        m.p = solve_side(&by_user, &m.q, k, reg)?;
        m.q = solve_side(&by_item, &m.p, k, reg)?;
        let (rmse, objective) = stats(&m, train, reg);
        if !rmse.is_finite() {
            return Err(Error::Divergence { epoch: sweep, rmse });
        }
        log::debug!("als sweep {sweep} train rmse {rmse:.6}");
        trace.push(AlsSweep { sweep, rmse, objective });
        if previous - rmse < tol {
            break;
        }
        previous = rmse;
    }
    Ok((FittedModel::from_train(spec.clone(), train, Parameters::Factors(m)), trace))
}

pub fn fit_als(train: &InteractionSet, spec: &ModelSpec) -> Result<FittedModel> {
    fit_als_traced(train, spec).map(|(m, _)| m)
}
