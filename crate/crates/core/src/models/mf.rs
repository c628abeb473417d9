//! Matrix factorization trained by stochastic gradient descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FittedModel, ModelSpec, Parameters};
use crate::data::InteractionSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfVariant {
    /// `p_u . q_i`
    Funk,
    /// `mu + b_u + b_i + p_u . q_i`
    Biased,
    /// `p_u . q_i` fitted on ratings mapped to [0, 1]
    Pmf,
}

impl MfVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "funk" => Ok(MfVariant::Funk),
            "biased" => Ok(MfVariant::Biased),
            "pmf" => Ok(MfVariant::Pmf),
            _ => Err(Error::Config(format!("unknown mf variant {s:?}"))),
        }
    }
}

/// Latent factors, row-major: `p` is `n_users x k`, `q` is `n_items x k`.
/// Predictions are `offset + scale * (mu + b_u + b_i + p_u . q_i)`, where
/// the bias terms are zero for unbiased variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub variant: MfVariant,
    pub k: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub mu: f64,
    pub offset: f64,
    pub scale: f64,
}

impl FactorModel {
    pub fn zeros(variant: MfVariant, k: usize, n_users: usize, n_items: usize) -> Self {
        Self {
            variant,
            k,
            p: vec![0.0; n_users * k],
            q: vec![0.0; n_items * k],
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
            mu: 0.0,
            offset: 0.0,
            scale: 1.0,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_bias.len()
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.p[u * self.k..(u + 1) * self.k]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.q[i * self.k..(i + 1) * self.k]
    }

    /// Prediction in the internal (training target) space.
    pub fn raw(&self, u: usize, i: usize) -> f64 {
        let dot: f64 = self.user(u).iter().zip(self.item(i)).map(|(a, b)| a * b).sum();
        dot + self.mu + self.user_bias[u] + self.item_bias[i]
    }

    pub fn predict(&self, u: usize, i: usize) -> f64 {
        self.offset + self.scale * self.raw(u, i)
    }

    fn biased(&self) -> bool {
        self.variant == MfVariant::Biased
    }
}

/// Training triples in the model's internal target space.
#[derive(Debug, Clone, PartialEq)]
pub struct MfData {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    pub targets: Vec<f64>,
    pub n_users: usize,
    pub n_items: usize,
}

impl MfData {
    /// Triples of `train`; PMF maps ratings linearly onto [0, 1].
    pub fn from_set(train: &InteractionSet, variant: MfVariant) -> (Self, f64, f64) {
        let scale = train.scale();
        let (offset, width) = match variant {
            MfVariant::Pmf => (scale.lo, scale.hi - scale.lo),
            _ => (0.0, 1.0),
        };
        let data = MfData {
            users: train.rows().iter().map(|r| r.0).collect(),
            items: train.rows().iter().map(|r| r.1).collect(),
            targets: train.interactions().iter().map(|r| (r.rating - offset) / width).collect(),
            n_users: train.n_users(),
            n_items: train.n_items(),
        };
        (data, offset, width)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Gradient with the same layout as [`FactorModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGrad {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
}

impl FactorGrad {
    pub fn zeros_like(m: &FactorModel) -> Self {
        Self {
            p: vec![0.0; m.p.len()],
            q: vec![0.0; m.q.len()],
            user_bias: vec![0.0; m.user_bias.len()],
            item_bias: vec![0.0; m.item_bias.len()],
        }
    }

    /// Adds `w * d raw(u, i)` to the gradient.
    pub fn add_prediction_grad(&mut self, m: &FactorModel, u: usize, i: usize, w: f64) {
        let k = m.k;
        for f in 0..k {
            self.p[u * k + f] += w * m.q[i * k + f];
            self.q[i * k + f] += w * m.p[u * k + f];
        }
        if m.biased() {
            self.user_bias[u] += w;
            self.item_bias[i] += w;
        }
    }
}

/// Training objective in internal space:
/// `sum_s 1/2 e_s^2 + 1/2 reg (|p_u|^2 + |q_i|^2 [+ b_u^2 + b_i^2])`,
/// i.e. each parameter is regularized once per training sample touching it.
pub fn mf_objective(m: &FactorModel, data: &MfData, reg: f64) -> f64 {
    let mut total = 0.0;
    for s in 0..data.len() {
        let (u, i) = (data.users[s], data.items[s]);
        let e = data.targets[s] - m.raw(u, i);
        let mut norm: f64 = m.user(u).iter().chain(m.item(i)).map(|x| x * x).sum();
        if m.biased() {
            norm += m.user_bias[u].powi(2) + m.item_bias[i].powi(2);
        }
        total += 0.5 * e * e + 0.5 * reg * norm;
    }
    total
}

/// Analytic gradient of [`mf_objective`].
pub fn mf_gradient(m: &FactorModel, data: &MfData, reg: f64) -> FactorGrad {
    let mut g = FactorGrad::zeros_like(m);
    let k = m.k;
    for s in 0..data.len() {
        let (u, i) = (data.users[s], data.items[s]);
        let e = data.targets[s] - m.raw(u, i);
        g.add_prediction_grad(m, u, i, -e);
        for f in 0..k {
            g.p[u * k + f] += reg * m.p[u * k + f];
            g.q[i * k + f] += reg * m.q[i * k + f];
        }
        if m.biased() {
            g.user_bias[u] += reg * m.user_bias[u];
            g.item_bias[i] += reg * m.item_bias[i];
        }
    }
    g
}

/// Called after every mini-batch of per-sample updates, with the sample
/// indices of the batch.
pub trait BatchHook {
    fn after_batch(&mut self, model: &mut FactorModel, data: &MfData, batch: &[usize], lr: f64) -> Result<()>;
}

struct NoHook;

impl BatchHook for NoHook {
    fn after_batch(&mut self, _: &mut FactorModel, _: &MfData, _: &[usize], _: f64) -> Result<()> {
        Ok(())
    }
}

/// Hyperparameters read from a spec, with defaults.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SgdSettings {
    pub variant: MfVariant,
    pub factors: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    pub init_scale: f64,
    pub batch_size: usize,
}

impl SgdSettings {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let s = Self {
            variant: MfVariant::parse(spec.text("variant", "biased"))?,
            factors: spec.int("factors", 10),
            lr: spec.num("lr", 0.01),
            reg: spec.num("reg", 0.02),
            epochs: spec.int("epochs", 20),
            init_scale: spec.num("init_scale", 0.1),
            batch_size: spec.int("batch_size", 100),
        };
        if s.factors == 0 || s.epochs == 0 || s.batch_size == 0 || !(s.lr > 0.0) || !(s.reg >= 0.0) {
            return Err(Error::Config(
                "mf_sgd needs factors, epochs, batch_size >= 1, lr > 0 and reg >= 0".into(),
            ));
        }
        Ok(s)
    }
}

fn train_rmse(m: &FactorModel, data: &MfData) -> f64 {
    let sse: f64 = (0..data.len())
        .map(|s| (m.scale * (data.targets[s] - m.raw(data.users[s], data.items[s]))).powi(2))
        .sum();
    (sse / data.len().max(1) as f64).sqrt()
}

/// SGD fit with a hook invoked after every batch.
pub fn fit_mf_with_hook(train: &InteractionSet, spec: &ModelSpec, hook: &mut dyn BatchHook) -> Result<FittedModel> {
    let st = SgdSettings::from_spec(spec)?;
    if train.is_empty() {
        return Err(Error::Empty("mf_sgd needs a non-empty train set".into()));
    }
    let (data, offset, width) = MfData::from_set(train, st.variant);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut m = FactorModel::zeros(st.variant, st.factors, data.n_users, data.n_items);
    m.offset = offset;
    m.scale = width;
    let bound = st.init_scale / (st.factors as f64).sqrt();
    for x in m.p.iter_mut().chain(m.q.iter_mut()) {
        *x = if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
    }
    if m.biased() {
        m.mu = data.targets.iter().sum::<f64>() / data.len() as f64;
    }

    let k = st.factors;
    let shrink = 1.0 / (1.0 + st.lr * st.reg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut qi_old = vec![0.0; k];
    for epoch in 0..st.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(st.batch_size) {
            for &s in batch {
                let (u, i) = (data.users[s], data.items[s]);
                let e = data.targets[s] - m.raw(u, i);
                // proximal step on the ridge term keeps large reg stable
                if m.biased() {
                    m.user_bias[u] = (m.user_bias[u] + st.lr * e) * shrink;
                    m.item_bias[i] = (m.item_bias[i] + st.lr * e) * shrink;
                }
                qi_old.copy_from_slice(&m.q[i * k..(i + 1) * k]);
                for f in 0..k {
                    let pu = m.p[u * k + f];
                    m.q[i * k + f] = (qi_old[f] + st.lr * e * pu) * shrink;
                    m.p[u * k + f] = (pu + st.lr * e * qi_old[f]) * shrink;
                }
            }
            hook.after_batch(&mut m, &data, batch, st.lr)?;
        }
        let rmse = train_rmse(&m, &data);
        log::debug!("mf_sgd epoch {} train rmse {rmse:.6}", epoch + 1);
        if !rmse.is_finite() {
            return Err(Error::Divergence { epoch: epoch + 1, rmse });
        }
    }
    Ok(FittedModel::from_train(spec.clone(), train, Parameters::Factors(m)))
}

/// Plain SGD matrix factorization.
pub fn fit_mf_sgd(train: &InteractionSet, spec: &ModelSpec) -> Result<FittedModel> {
    fit_mf_with_hook(train, spec, &mut NoHook)
}
