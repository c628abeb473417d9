//! Per-user train/validation/test partitioning.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionSet, RatingScale};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Most recent interactions held out.
    Temporal,
    /// No timestamps: held-out interactions chosen by seeded shuffle.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub seed: u64,
    pub test_frac: f64,
    pub valid_frac: f64,
    pub strategy: SplitStrategy,
    pub rounding: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub train: InteractionSet,
    pub validation: InteractionSet,
    pub test: InteractionSet,
    pub meta: SplitMeta,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Part {
    Train,
    Validation,
    Test,
}

/// `round(frac * n)`, half away from zero, leaving at least one interaction
/// behind whenever `n >= 2`.
fn held_out(frac: f64, n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    ((frac * n as f64).round() as usize).min(n - 1)
}

/// Splits each user's interactions: `round(test_frac * n)` most recent go to
/// test, then `round(valid_frac * rest)` most recent of the rest go to
/// validation. Ties in timestamps and missing timestamps are ordered by a
/// shuffle seeded from `seed` and the user index. Interactions without a
/// timestamp sort before timestamped ones.
///
/// Output rows are ordered by input user index, then input item index.
pub fn split_per_user(set: &InteractionSet, test_frac: f64, valid_frac: f64, seed: u64) -> Result<SplitBundle> {
    if !(0.0..1.0).contains(&test_frac) || !(0.0..1.0).contains(&valid_frac) {
        return Err(Error::invalid(format!(
            "fractions must lie in [0, 1): test {test_frac}, validation {valid_frac}"
        )));
    }
    if test_frac + (1.0 - test_frac) * valid_frac >= 1.0 {
        return Err(Error::invalid("test and validation fractions leave nothing for training"));
    }
    let by_user = set.rows_by_user();
    let rows = set.rows();
    let interactions = set.interactions();
    let parts: Vec<Vec<(usize, Part)>> = par::map_range(by_user.len(), |u| {
        let mut mine = by_user[u].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u as u64);
        mine.shuffle(&mut rng);
        mine.sort_by_key(|&r| interactions[r].timestamp.unwrap_or(i64::MIN));
        let n = mine.len();
        let n_test = held_out(test_frac, n);
        let rest = n - n_test;
        let n_valid = held_out(valid_frac, rest);
        mine.iter()
            .enumerate()
            .map(|(pos, &r)| {
                let part = if pos >= rest {
                    Part::Test
                } else if pos >= rest - n_valid {
                    Part::Validation
                } else {
                    Part::Train
                };
                (r, part)
            })
            .collect()
    });

    let mut assigned: Vec<(usize, usize, usize, Part)> = parts
        .into_iter()
        .flatten()
        .map(|(r, p)| (rows[r].0, rows[r].1, r, p))
        .collect();
    assigned.sort_unstable_by_key(|&(u, i, _, _)| (u, i));
    let collect = |part: Part| -> Result<InteractionSet> {
        let chosen = assigned
            .iter()
            .filter(|a| a.3 == part)
            .map(|a| interactions[a.2].clone())
            .collect();
        InteractionSet::new(chosen, set.scale())
    };
    let strategy = if interactions.iter().any(|r| r.timestamp.is_some()) {
        SplitStrategy::Temporal
    } else {
        SplitStrategy::Random
    };
    Ok(SplitBundle {
        train: collect(Part::Train)?,
        validation: collect(Part::Validation)?,
        test: collect(Part::Test)?,
        meta: SplitMeta {
            seed,
            test_frac,
            valid_frac,
            strategy,
            rounding: "half_away_from_zero".into(),
        },
    })
}

impl SplitBundle {
    /// Writes `train.tsv`, `validation.tsv`, `test.tsv` and `split.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.train.write_canonical(&dir.join("train.tsv"))?;
        self.validation.write_canonical(&dir.join("validation.tsv"))?;
        self.test.write_canonical(&dir.join("test.tsv"))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("serializable");
        let path = dir.join("split.json");
        fs::write(&path, meta + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path, scale: RatingScale) -> Result<Self> {
        let path = dir.join("split.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta = serde_json::from_str(&text).map_err(|e| Error::MalformedRow {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(Self {
            train: InteractionSet::read_canonical(&dir.join("train.tsv"), scale)?,
            validation: InteractionSet::read_canonical(&dir.join("validation.tsv"), scale)?,
            test: InteractionSet::read_canonical(&dir.join("test.tsv"), scale)?,
            meta,
        })
    }

    /// Checks disjointness, coverage of `input`, and train presence of every
    /// user with at least two interactions.
    pub fn validate_against(&self, input: &InteractionSet) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for set in [&self.train, &self.validation, &self.test] {
            for it in set.interactions() {
                if !seen.insert((it.user.as_str(), it.item.as_str())) {
                    return Err(Error::invalid(format!("pair ({}, {}) in two parts", it.user, it.item)));
                }
            }
        }
        if seen.len() != input.len() || input.interactions().iter().any(|it| !seen.contains(&(it.user.as_str(), it.item.as_str()))) {
            return Err(Error::invalid("split parts do not cover the input"));
        }
        for (u, rows) in input.rows_by_user().iter().enumerate() {
            if rows.len() >= 2 && self.train.user_idx(input.user_id(u)).is_none() {
                return Err(Error::invalid(format!("user {} missing from train", input.user_id(u))));
            }
        }
        Ok(())
    }
}
