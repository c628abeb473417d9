//! Matrix factorization with an independence penalty between predictions
//! and group membership.

use serde::{Deserialize, Serialize};

use crate::data::{GroupAssignment, InteractionSet};
use crate::error::{Error, Result};
use crate::models::{fit_mf_sgd, fit_mf_with_hook, BatchHook, FactorGrad, FactorModel, FittedModel, MfData, ModelFamily, ModelSpec};

/// Variance floor for the Gaussian terms.
const VAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndependenceTerm {
    /// `(m0 - m1)^2`
    MeanM,
    /// Bhattacharyya distance between per-group Gaussians.
    BdistM,
    /// Mutual information between prediction and group under Gaussians.
    MiNormal,
}

impl IndependenceTerm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean_m" => Ok(IndependenceTerm::MeanM),
            "bdist_m" => Ok(IndependenceTerm::BdistM),
            "mi_normal" => Ok(IndependenceTerm::MiNormal),
            _ => Err(Error::Config(format!("unknown independence term {s:?}"))),
        }
    }
}

struct GroupStats {
    n: [f64; 2],
    mean: [f64; 2],
    var: [f64; 2],
    all_mean: f64,
    all_var: f64,
}

fn stats(preds: &[f64], groups: &[u8]) -> Option<GroupStats> {
    let mut n = [0.0; 2];
    let mut sum = [0.0; 2];
    for (&x, &g) in preds.iter().zip(groups) {
        n[g as usize] += 1.0;
        sum[g as usize] += x;
    }
    if n[0] == 0.0 || n[1] == 0.0 {
        return None;
    }
    let mean = [sum[0] / n[0], sum[1] / n[1]];
    let mut ss = [0.0; 2];
    for (&x, &g) in preds.iter().zip(groups) {
        ss[g as usize] += (x - mean[g as usize]).powi(2);
    }
    let total = n[0] + n[1];
    let all_mean = (sum[0] + sum[1]) / total;
    let all_var = preds.iter().map(|x| (x - all_mean).powi(2)).sum::<f64>() / total + VAR_FLOOR;
    Some(GroupStats {
        n,
        mean,
        var: [ss[0] / n[0] + VAR_FLOOR, ss[1] / n[1] + VAR_FLOOR],
        all_mean,
        all_var,
    })
}

/// Penalty of predictions `preds` whose groups are `groups`; zero when a
/// group is absent.
pub fn penalty(term: IndependenceTerm, preds: &[f64], groups: &[u8]) -> f64 {
    let Some(s) = stats(preds, groups) else {
        return 0.0;
    };
    let d = s.mean[0] - s.mean[1];
    match term {
        IndependenceTerm::MeanM => d * d,
        IndependenceTerm::BdistM => {
            let v = s.var[0] + s.var[1];
            // both terms are >= 0 in exact arithmetic
            (0.25 * d * d / v + 0.5 * (v / (2.0 * (s.var[0] * s.var[1]).sqrt())).ln()).max(0.0)
        }
        IndependenceTerm::MiNormal => {
            let total = s.n[0] + s.n[1];
            let all = s.all_var.ln();
            (0..2).map(|g| s.n[g] / total * 0.5 * (all - s.var[g].ln())).sum::<f64>().max(0.0)
        }
    }
}

/// Derivative of [`penalty`] with respect to each prediction.
pub fn penalty_pred_grad(term: IndependenceTerm, preds: &[f64], groups: &[u8]) -> Vec<f64> {
    let Some(s) = stats(preds, groups) else {
        return vec![0.0; preds.len()];
    };
    let d = s.mean[0] - s.mean[1];
    // dpen/dmean_g and dpen/dvar_g, plus dpen/dall_var for mi
    let (dm, dv, dall) = match term {
        IndependenceTerm::MeanM => ([2.0 * d, -2.0 * d], [0.0, 0.0], 0.0),
        IndependenceTerm::BdistM => {
            let v = s.var[0] + s.var[1];
            let dvar = |g: usize| -0.25 * d * d / (v * v) + 0.5 * (1.0 / v - 0.5 / s.var[g]);
            ([0.5 * d / v, -0.5 * d / v], [dvar(0), dvar(1)], 0.0)
        }
        IndependenceTerm::MiNormal => {
            let total = s.n[0] + s.n[1];
            ([0.0, 0.0], [-0.5 * s.n[0] / total / s.var[0], -0.5 * s.n[1] / total / s.var[1]], 0.5 / s.all_var)
        }
    };
    let total = s.n[0] + s.n[1];
    preds
        .iter()
        .zip(groups)
        .map(|(&x, &g)| {
            let g = g as usize;
            dm[g] / s.n[g] + dv[g] * 2.0 * (x - s.mean[g]) / s.n[g] + dall * 2.0 * (x - s.all_mean) / total
        })
        .collect()
}

/// Labeled samples of `samples`, their raw predictions and groups.
fn labeled(model: &FactorModel, data: &MfData, samples: &[usize], user_groups: &[Option<u8>]) -> (Vec<usize>, Vec<f64>, Vec<u8>) {
    let mut idx = Vec::new();
    let mut preds = Vec::new();
    let mut groups = Vec::new();
    for &s in samples {
        if let Some(g) = user_groups[data.users[s]] {
            idx.push(s);
            preds.push(model.raw(data.users[s], data.items[s]));
            groups.push(g);
        }
    }
    (idx, preds, groups)
}

/// Penalty over the given samples as a function of the model parameters.
pub fn penalty_on(model: &FactorModel, data: &MfData, samples: &[usize], user_groups: &[Option<u8>], term: IndependenceTerm) -> f64 {
    let (_, preds, groups) = labeled(model, data, samples, user_groups);
    penalty(term, &preds, &groups)
}

/// Gradient of [`penalty_on`] with respect to the model parameters.
pub fn penalty_model_grad(model: &FactorModel, data: &MfData, samples: &[usize], user_groups: &[Option<u8>], term: IndependenceTerm) -> FactorGrad {
    let (idx, preds, groups) = labeled(model, data, samples, user_groups);
    let dp = penalty_pred_grad(term, &preds, &groups);
    let mut g = FactorGrad::zeros_like(model);
    for (&s, w) in idx.iter().zip(dp) {
        g.add_prediction_grad(model, data.users[s], data.items[s], w);
    }
    g
}

/// Applies `lr * eta * |B| * grad(penalty over B)` after each batch.
pub struct KamishimaHook {
    pub user_groups: Vec<Option<u8>>,
    pub term: IndependenceTerm,
    pub eta: f64,
}

impl BatchHook for KamishimaHook {
    fn after_batch(&mut self, model: &mut FactorModel, data: &MfData, batch: &[usize], lr: f64) -> Result<()> {
        let g = penalty_model_grad(model, data, batch, &self.user_groups, self.term);
        let step = lr * self.eta * batch.len() as f64;
        for (x, d) in model.p.iter_mut().zip(&g.p) {
            *x -= step * d;
        }
        for (x, d) in model.q.iter_mut().zip(&g.q) {
            *x -= step * d;
        }
        for (x, d) in model.user_bias.iter_mut().zip(&g.user_bias) {
            *x -= step * d;
        }
        for (x, d) in model.item_bias.iter_mut().zip(&g.item_bias) {
            *x -= step * d;
        }
        Ok(())
    }
}

/// SGD matrix factorization with the independence penalty weighted by `eta`.
/// `eta = 0` is exactly the plain fit.
pub fn fit_pmf_independent(train: &InteractionSet, groups: &GroupAssignment, term: IndependenceTerm, eta: f64, spec: &ModelSpec) -> Result<FittedModel> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::Config(format!("independence weight must be finite and >= 0, got {eta}")));
    }
    if spec.family != ModelFamily::MfSgd {
        return Err(Error::Incompatible(format!("kamishima needs mf_sgd, got {}", spec.family)));
    }
    if eta == 0.0 {
        return fit_mf_sgd(train, spec);
    }
    let user_groups = train.users().map(|u| groups.group_of(u)).collect();
    let mut hook = KamishimaHook { user_groups, term, eta };
    fit_mf_with_hook(train, spec, &mut hook)
}
