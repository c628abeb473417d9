use serde::{Deserialize, Serialize};

use super::{FittedModel, ModelSpec, Parameters};
use crate::data::InteractionSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularityMode {
    /// Number of interactions (TopPopular).
    Count,
    /// Damped mean rating (AvgRating).
    MeanRating,
}

/// Non-personalized scores. `MeanRating` shrinks each item mean towards the
/// global mean: `(damping * mu + sum) / (damping + count)`, with `damping`
/// read from the spec (default 10).
pub fn fit_popularity(train: &InteractionSet, mode: PopularityMode, spec: &ModelSpec) -> Result<FittedModel> {
    if train.is_empty() {
        return Err(Error::Empty("popularity model needs a non-empty train set".into()));
    }
    let mut counts = vec![0.0; train.n_items()];
    let mut sums = vec![0.0; train.n_items()];
    for (it, &(_, i)) in train.interactions().iter().zip(train.rows()) {
        counts[i] += 1.0;
        sums[i] += it.rating;
    }
    let scores = match mode {
        PopularityMode::Count => counts,
        PopularityMode::MeanRating => {
            let damping = spec.num("damping", 10.0);
            let mu = train.mean_rating().unwrap();
            sums.iter()
                .zip(&counts)
                .map(|(s, c)| (damping * mu + s) / (damping + c))
                .collect()
        }
    };
    Ok(FittedModel::from_train(spec.clone(), train, Parameters::Popularity { scores, mode }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interaction, RatingScale};
    use crate::models::{ModelFamily, Scorer};

    #[test]
    fn constant_ratings_give_constant_scores() {
        let rows = (0..6).map(|k| Interaction::new(format!("u{}", k % 3), format!("i{k}"), 4.0)).collect();
        let set = InteractionSet::new(rows, RatingScale::FIVE_STAR).unwrap();
        let m = fit_popularity(&set, PopularityMode::MeanRating, &ModelSpec::new(ModelFamily::AvgRating)).unwrap();
        assert!(m.score_all_items(Some(0)).iter().all(|&s| (s - 4.0).abs() < 1e-12));
    }

    #[test]
    fn damped_mean_by_hand() {
        // damping 2, prior 3 (global mean), ratings {5, 5}: (2*3 + 10) / 4 = 4
        let rows = vec![
            Interaction::new("a", "x", 5.0),
            Interaction::new("b", "x", 5.0),
            Interaction::new("c", "y", 1.0),
            Interaction::new("d", "y", 1.0),
        ];
        let set = InteractionSet::new(rows, RatingScale::FIVE_STAR).unwrap();
        let spec = ModelSpec::new(ModelFamily::AvgRating).with("damping", 2.0);
        let m = fit_popularity(&set, PopularityMode::MeanRating, &spec).unwrap();
        assert!((m.score("a", "x") - 4.0).abs() < 1e-12);
        assert!(m.predicts_ratings());
    }

    #[test]
    fn counts() {
        let rows = vec![
            Interaction::new("a", "i1", 3.0),
            Interaction::new("b", "i1", 3.0),
            Interaction::new("c", "i1", 3.0),
            Interaction::new("c", "i2", 3.0),
        ];
        let set = InteractionSet::new(rows, RatingScale::FIVE_STAR).unwrap();
        let m = fit_popularity(&set, PopularityMode::Count, &ModelSpec::new(ModelFamily::Popularity)).unwrap();
        assert_eq!(m.score("zzz", "i1"), 3.0);
        assert_eq!(m.score("a", "i2"), 1.0);
        assert!(!m.predicts_ratings());
        assert!(fit_popularity(&InteractionSet::empty(RatingScale::FIVE_STAR), PopularityMode::Count, &m.spec).is_err());
    }
}
