//! Neighborhood models (UserKNN / ItemKNN).

use serde::{Deserialize, Serialize};

use super::{FittedModel, ModelFamily, ModelSpec, Parameters};
use crate::data::InteractionSet;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnAxis {
    User,
    Item,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Cosine,
    Pearson,
}

/// Similarities between "entities" (users for the user axis, items for the
/// item axis) plus the rating lists needed to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub axis: KnnAxis,
    pub similarity: Similarity,
    pub neighbors: usize,
    pub shrinkage: f64,
    /// entity -> (other index, rating), sorted by other index
    entity_ratings: Vec<Vec<(usize, f64)>>,
    /// other -> (entity index, rating), sorted by entity index
    other_ratings: Vec<Vec<(usize, f64)>>,
    entity_means: Vec<f64>,
    item_means: Vec<f64>,
    /// dense row-major `n_entities x n_entities`
    sims: Vec<f64>,
}

/// Shrunk similarity of two sparse rating vectors over their overlap.
/// Pearson centers each vector by its own overall mean. Zero-norm or empty
/// overlaps give 0.
pub fn pair_similarity(
    a: &[(usize, f64)],
    b: &[(usize, f64)],
    mean_a: f64,
    mean_b: f64,
    kind: Similarity,
    shrinkage: f64,
) -> f64 {
    let (mut dot, mut na, mut nb, mut overlap) = (0.0, 0.0, 0.0, 0usize);
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].0.cmp(&b[y].0) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                let (ra, rb) = match kind {
                    Similarity::Cosine => (a[x].1, b[y].1),
                    Similarity::Pearson => (a[x].1 - mean_a, b[y].1 - mean_b),
                };
                dot += ra * rb;
                na += ra * ra;
                nb += rb * rb;
                overlap += 1;
                x += 1;
                y += 1;
            }
        }
    }
    if overlap == 0 || na <= 0.0 || nb <= 0.0 {
        return 0.0;
    }
    let s = dot / (na.sqrt() * nb.sqrt());
    let n = overlap as f64;
    s * n / (n + shrinkage)
}

impl KnnModel {
    fn sim(&self, a: usize, b: usize) -> f64 {
        self.sims[a * self.entity_means.len() + b]
    }

    /// Prediction for `entity` on `other` from the top-N positively similar
    /// peers that rated `other`.
    fn predict_entity(&self, entity: usize, other: usize, item: usize, global_mean: f64) -> f64 {
        let mut peers: Vec<(f64, usize, f64)> = self.other_ratings[other]
            .iter()
            .filter(|&&(p, _)| p != entity)
            .filter_map(|&(p, r)| {
                let s = self.sim(entity, p);
                (s > 0.0).then_some((s, p, r))
            })
            .collect();
        if peers.is_empty() {
            return self.item_means.get(item).copied().filter(|m| m.is_finite()).unwrap_or(global_mean);
        }
        let by_sim = |a: &(f64, usize, f64), b: &(f64, usize, f64)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if peers.len() > self.neighbors {
            peers.select_nth_unstable_by(self.neighbors - 1, by_sim);
            peers.truncate(self.neighbors);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(s, p, r) in &peers {
            num += s * match self.similarity {
                Similarity::Cosine => r,
                Similarity::Pearson => r - self.entity_means[p],
            };
            den += s;
        }
        match self.similarity {
            Similarity::Cosine => num / den,
            Similarity::Pearson => self.entity_means[entity] + num / den,
        }
    }

    pub fn predict(&self, user: usize, item: usize, global_mean: f64) -> f64 {
        match self.axis {
            KnnAxis::User => self.predict_entity(user, item, item, global_mean),
            KnnAxis::Item => self.predict_entity(item, user, item, global_mean),
        }
    }

    pub fn predict_all(&self, user: usize, global_mean: f64) -> Vec<f64> {
        (0..self.item_means.len()).map(|i| self.predict(user, i, global_mean)).collect()
    }

    pub fn similarity_between(&self, a: usize, b: usize) -> f64 {
        self.sim(a, b)
    }
}

/// Fits a neighborhood model. The axis comes from the spec family; the
/// spec supplies `neighbors` (default 20), `similarity` (default cosine)
/// and `shrinkage` (default 0).
pub fn fit_knn(train: &InteractionSet, spec: &ModelSpec) -> Result<FittedModel> {
    let axis = match spec.family {
        ModelFamily::UserKnn => KnnAxis::User,
        ModelFamily::ItemKnn => KnnAxis::Item,
        other => return Err(Error::invalid(format!("{other} is not a neighborhood model"))),
    };
    let neighbors = spec.int("neighbors", 20);
    if neighbors == 0 {
        return Err(Error::Config("neighbors must be at least 1".into()));
    }
    let similarity = match spec.text("similarity", "cosine") {
        "pearson" => Similarity::Pearson,
        _ => Similarity::Cosine,
    };
    let shrinkage = spec.num("shrinkage", 0.0);

    let (n_users, n_items) = (train.n_users(), train.n_items());
    let mut by_user = vec![Vec::new(); n_users];
    let mut by_item = vec![Vec::new(); n_items];
    for (it, &(u, i)) in train.interactions().iter().zip(train.rows()) {
        by_user[u].push((i, it.rating));
        by_item[i].push((u, it.rating));
    }
    for list in by_user.iter_mut().chain(by_item.iter_mut()) {
        list.sort_by_key(|e| e.0);
    }
    let mean = |l: &Vec<(usize, f64)>| {
        if l.is_empty() {
            f64::NAN
        } else {
            l.iter().map(|e| e.1).sum::<f64>() / l.len() as f64
        }
    };
    let item_means: Vec<f64> = by_item.iter().map(mean).collect();
    let (entity_ratings, other_ratings) = match axis {
        KnnAxis::User => (by_user, by_item),
        KnnAxis::Item => (by_item, by_user),
    };
    let entity_means: Vec<f64> = entity_ratings.iter().map(mean).collect();
    let n = entity_ratings.len();
    let rows = par::map_range(n, |a| {
        (0..n)
            .map(|b| {
                // evaluated in (low, high) order so the table is exactly symmetric
                let (x, y) = (a.min(b), a.max(b));
                if a == b {
                    // self-similarity is never used as a neighbor
                    1.0
                } else {
                    pair_similarity(
                        &entity_ratings[x],
                        &entity_ratings[y],
                        entity_means[x],
                        entity_means[y],
                        similarity,
                        shrinkage,
                    )
                }
            })
            .collect::<Vec<f64>>()
    });
    let model = KnnModel {
        axis,
        similarity,
        neighbors,
        shrinkage,
        entity_ratings,
        other_ratings,
        entity_means,
        item_means,
        sims: rows.into_iter().flatten().collect(),
    };
    Ok(FittedModel::from_train(spec.clone(), train, Parameters::Knn(model)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interaction, RatingScale};
    use crate::models::Scorer;

    fn set(rows: &[(&str, &str, f64)]) -> InteractionSet {
        InteractionSet::new(
            rows.iter().map(|&(u, i, r)| Interaction::new(u, i, r)).collect(),
            RatingScale::FIVE_STAR,
        )
        .unwrap()
    }

    #[test]
    fn identical_vectors_have_unit_cosine() {
        let a = [(0, 4.0), (3, 2.0), (5, 1.0)];
        assert!((pair_similarity(&a, &a, 0.0, 0.0, Similarity::Cosine, 0.0) - 1.0).abs() < 1e-15);
        // shrinkage 3 over 3 co-rated items halves it
        assert!((pair_similarity(&a, &a, 0.0, 0.0, Similarity::Cosine, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn disjoint_users_use_fallback() {
        let s = set(&[("a", "i1", 5.0), ("b", "i2", 3.0), ("c", "i2", 1.0)]);
        let m = fit_knn(&s, &ModelSpec::new(ModelFamily::UserKnn)).unwrap();
        let Parameters::Knn(k) = &m.params else { unreachable!() };
        assert_eq!(k.similarity_between(0, 1), 0.0);
        // a has no neighbor who rated i2: item mean of i2
        assert_eq!(m.score("a", "i2"), 2.0);
    }

    #[test]
    fn weighted_average_by_hand() {
        // u3 overlaps u1 on {x, y} and u2 on {x, z}; set the ratings so the
        // cosine similarities come out exactly, then check (0.8*4 + 0.4*2)/1.2
        let k = KnnModel {
            axis: KnnAxis::User,
            similarity: Similarity::Cosine,
            neighbors: 5,
            shrinkage: 0.0,
            entity_ratings: vec![vec![], vec![], vec![]],
            other_ratings: vec![vec![(0, 4.0), (1, 2.0)]],
            entity_means: vec![0.0; 3],
            item_means: vec![3.0],
            sims: vec![1.0, 0.0, 0.8, 0.0, 1.0, 0.4, 0.8, 0.4, 1.0],
        };
        let expected = (0.8 * 4.0 + 0.4 * 2.0) / 1.2;
        assert!((k.predict(2, 0, 3.0) - expected).abs() < 1e-12);
        assert!((expected - 3.333_333_333_333_333).abs() < 1e-12);
    }

    #[test]
    fn neighbor_limit_and_pearson() {
        let s = set(&[
            ("a", "x", 5.0),
            ("a", "y", 1.0),
            ("b", "x", 4.0),
            ("b", "y", 2.0),
            ("b", "z", 4.0),
            ("c", "x", 1.0),
            ("c", "y", 5.0),
            ("c", "z", 2.0),
        ]);
        let spec = ModelSpec::new(ModelFamily::UserKnn).with("neighbors", 1.0).with("similarity", "pearson");
        let m = fit_knn(&s, &spec).unwrap();
        // a correlates positively with b only: mean_a + (r_bz - mean_b)
        let mean_a = 3.0;
        let mean_b = 10.0 / 3.0;
        assert!((m.score("a", "z") - (mean_a + 4.0 - mean_b)).abs() < 1e-12);
        let item = fit_knn(&s, &ModelSpec::new(ModelFamily::ItemKnn)).unwrap();
        assert!(item.score("a", "z").is_finite());
    }
}
