//! Classical recommenders and the shared scoring / top-n machinery.

mod checkpoint;
mod knn;
mod mf;
mod popularity;
mod slim;
mod spec;
mod tables;

pub mod als;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionSet, RatingScale};
use crate::error::Result;
use crate::par;

pub use als::{fit_als, fit_als_traced, AlsSweep};
pub use knn::{fit_knn, KnnAxis, KnnModel, Similarity};
pub use mf::{fit_mf_sgd, fit_mf_with_hook, mf_gradient, mf_objective, BatchHook, FactorGrad, FactorModel, MfData, MfVariant};
pub use popularity::{fit_popularity, PopularityMode};
pub use slim::{fit_slim_u, SlimModel, SlimProblem, SlimSweep};
pub use spec::{ModelFamily, ModelSpec, ParamValue};
pub use tables::{ScoreTable, TopNLists};

/// Anything that can score a (user, item) pair.
pub trait Scorer: Sync {
    fn score(&self, user: &str, item: &str) -> f64;

    /// The rating scale when scores are rating predictions; `None` for
    /// ranking-only scores such as interaction counts.
    fn rating_scale(&self) -> Option<RatingScale>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameters {
    Popularity { scores: Vec<f64>, mode: PopularityMode },
    Knn(KnnModel),
    Factors(FactorModel),
    Slim(SlimModel),
}

/// A trained recommender. Immutable after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub users: IndexMap<String, usize>,
    pub items: IndexMap<String, usize>,
    pub global_mean: f64,
    pub scale: RatingScale,
    /// Fingerprint of the training set.
    pub train_reference: String,
    pub params: Parameters,
}

impl FittedModel {
    pub(crate) fn from_train(spec: ModelSpec, train: &InteractionSet, params: Parameters) -> Self {
        Self {
            spec,
            users: train.user_index().clone(),
            items: train.item_index().clone(),
            global_mean: train.mean_rating().unwrap_or((train.scale().lo + train.scale().hi) / 2.0),
            scale: train.scale(),
            train_reference: train.fingerprint(),
            params,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn factors(&self) -> Option<&FactorModel> {
        match &self.params {
            Parameters::Factors(f) => Some(f),
            _ => None,
        }
    }

    pub fn slim(&self) -> Option<&SlimModel> {
        match &self.params {
            Parameters::Slim(s) => Some(s),
            _ => None,
        }
    }

    /// Score by internal indices. `None` for either index means the entity
    /// is unknown to the model and the global train mean is returned, except
    /// that user-independent models ignore the user.
    pub fn score_idx(&self, user: Option<usize>, item: Option<usize>) -> f64 {
        let Some(i) = item else {
            return self.global_mean;
        };
        match &self.params {
            Parameters::Popularity { scores, .. } => scores[i],
            Parameters::Knn(m) => match user {
                Some(u) => m.predict(u, i, self.global_mean),
                None => self.global_mean,
            },
            Parameters::Factors(f) => match user {
                Some(u) => f.predict(u, i),
                None => self.global_mean,
            },
            Parameters::Slim(s) => match user {
                Some(u) => s.predict(u, i),
                None => self.global_mean,
            },
        }
    }

    /// Scores of every model item for one user, indexed by item index.
    pub fn score_all_items(&self, user: Option<usize>) -> Vec<f64> {
        match (&self.params, user) {
            (Parameters::Popularity { scores, .. }, _) => scores.clone(),
            (_, None) => vec![self.global_mean; self.n_items()],
            (Parameters::Knn(m), Some(u)) => m.predict_all(u, self.global_mean),
            (Parameters::Factors(f), Some(u)) => (0..self.n_items()).map(|i| f.predict(u, i)).collect(),
            (Parameters::Slim(s), Some(u)) => s.predict_all(u, self.n_items()),
        }
    }

    pub fn predicts_ratings(&self) -> bool {
        !matches!(
            self.params,
            Parameters::Slim(_) | Parameters::Popularity { mode: PopularityMode::Count, .. }
        )
    }
}

impl Scorer for FittedModel {
    fn score(&self, user: &str, item: &str) -> f64 {
        self.score_idx(self.users.get(user).copied(), self.items.get(item).copied())
    }

    fn rating_scale(&self) -> Option<RatingScale> {
        self.predicts_ratings().then_some(self.scale)
    }
}

/// Fits `spec` on `train`, dispatching on the model family.
pub fn fit(spec: &ModelSpec, train: &InteractionSet) -> Result<FittedModel> {
    spec.validate()?;
    match spec.family {
        ModelFamily::Popularity => fit_popularity(train, PopularityMode::Count, spec),
        ModelFamily::AvgRating => fit_popularity(train, PopularityMode::MeanRating, spec),
        ModelFamily::UserKnn | ModelFamily::ItemKnn => fit_knn(train, spec),
        ModelFamily::MfSgd => fit_mf_sgd(train, spec),
        ModelFamily::Als => fit_als(train, spec),
        ModelFamily::SlimU => fit_slim_u(train, spec, None),
    }
}

/// Scores the requested pairs.
pub fn predict_scores<'a>(
    model: &(impl Scorer + ?Sized),
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> ScoreTable {
    let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
    let scores = par::map_slice(&pairs, |(u, i)| model.score(u, i));
    ScoreTable::from_iter(
        pairs
            .into_iter()
            .zip(scores)
            .map(|((u, i), s)| (u.to_string(), i.to_string(), s)),
    )
}

/// Scores every pair of `set`.
pub fn predict_set(model: &(impl Scorer + ?Sized), set: &InteractionSet) -> ScoreTable {
    predict_scores(model, set.interactions().iter().map(|r| (r.user.as_str(), r.item.as_str())))
}

/// Top-`n` unseen items for every real user of `train`.
///
/// Candidates are the model's items minus the user's train items, ranked by
/// score descending with ties broken by ascending item index.
pub fn recommend_topn(model: &FittedModel, train: &InteractionSet, n: usize) -> TopNLists {
    let users: Vec<&str> = train.users().filter(|u| !crate::data::is_synthetic_user(u)).collect();
    let by_user = train.rows_by_user();
    let lists = par::map_slice(&users, |user| {
        let t = train.user_idx(user).unwrap();
        let mut seen = vec![false; model.n_items()];
        for &row in &by_user[t] {
            if let Some(&i) = model.items.get(&train.interactions()[row].item) {
                seen[i] = true;
            }
        }
        let scores = model.score_all_items(model.users.get(*user).copied());
        let mut cand: Vec<usize> = (0..model.n_items()).filter(|&i| !seen[i]).collect();
        let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
        if cand.len() > n && n > 0 {
            cand.select_nth_unstable_by(n - 1, cmp);
            cand.truncate(n);
        }
        cand.sort_by(cmp);
        cand.truncate(n);
        cand.into_iter()
            .map(|i| (model.items.get_index(i).unwrap().0.clone(), scores[i]))
            .collect::<Vec<_>>()
    });
    TopNLists::from_iter(users.into_iter().map(String::from).zip(lists))
}

pub use checkpoint::{load_model, save_model};
