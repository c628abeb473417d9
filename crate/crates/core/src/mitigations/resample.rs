use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{GroupAssignment, InteractionSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceBy {
    #[default]
    Interactions,
    Users,
}

impl BalanceBy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "interactions" => Ok(BalanceBy::Interactions),
            "users" => Ok(BalanceBy::Users),
            _ => Err(Error::Config(format!("unknown balancing unit {s:?}"))),
        }
    }
}

/// Subsamples the larger group uniformly without replacement so that both
/// groups have the same number of interactions (or users). The smaller
/// group and unlabeled users are kept; input order is preserved.
pub fn resample_balanced(train: &InteractionSet, groups: &GroupAssignment, by: BalanceBy, seed: u64) -> Result<InteractionSet> {
    let mut rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (k, r) in train.interactions().iter().enumerate() {
        if let Some(g) = groups.group_of(&r.user) {
            rows[g as usize].push(k);
        }
    }
    for (g, r) in rows.iter().enumerate() {
        if r.is_empty() {
            return Err(Error::EmptyGroup(g as u8));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drop: BTreeSet<usize> = match by {
        BalanceBy::Interactions => {
            let large = if rows[0].len() >= rows[1].len() { 0 } else { 1 };
            let keep_n = rows[1 - large].len();
            let keep: BTreeSet<usize> = rand::seq::index::sample(&mut rng, rows[large].len(), keep_n)
                .into_iter()
                .map(|k| rows[large][k])
                .collect();
            rows[large].iter().copied().filter(|k| !keep.contains(k)).collect()
        }
        BalanceBy::Users => {
            let mut users: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
            for u in train.users() {
                if let Some(g) = groups.group_of(u) {
                    users[g as usize].push(u);
                }
            }
            let large = if users[0].len() >= users[1].len() { 0 } else { 1 };
            let keep_n = users[1 - large].len();
            let keep: BTreeSet<&str> = rand::seq::index::sample(&mut rng, users[large].len(), keep_n)
                .into_iter()
                .map(|k| users[large][k])
                .collect();
            rows[large]
                .iter()
                .copied()
                .filter(|&k| !keep.contains(train.interactions()[k].user.as_str()))
                .collect()
        }
    };
    let mut k = 0;
    Ok(train.filter(|_| {
        k += 1;
        !drop.contains(&(k - 1))
    }))
}
