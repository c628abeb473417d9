use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::attributes::AttributeTable;
use super::interactions::{is_synthetic_user, InteractionSet};
use crate::error::{Error, Result};

/// Binary protected-group label per user. Group 0 is the majority
/// (non-protected) group, group 1 the minority (protected) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub attribute: String,
    labels: BTreeMap<String, u8>,
    group_shares: [f64; 2],
    /// Human-readable description of each group, e.g. `<35` / `>=35`.
    pub group_names: [String; 2],
}

impl GroupAssignment {
    pub fn new(
        attribute: impl Into<String>,
        labels: BTreeMap<String, u8>,
        group_names: [String; 2],
    ) -> Result<Self> {
        let mut counts = [0usize; 2];
        for (user, &g) in &labels {
            if g > 1 {
                return Err(Error::invalid(format!("user {user} has group label {g}")));
            }
            counts[g as usize] += 1;
        }
        for g in 0..2 {
            if counts[g] == 0 {
                return Err(Error::EmptyGroup(g as u8));
            }
        }
        let n = labels.len() as f64;
        Ok(Self {
            attribute: attribute.into(),
            labels,
            group_shares: [counts[0] as f64 / n, counts[1] as f64 / n],
            group_names,
        })
    }

    /// Convenience constructor from `(user, group)` pairs.
    pub fn from_pairs<'a>(
        attribute: &str,
        pairs: impl IntoIterator<Item = (&'a str, u8)>,
    ) -> Result<Self> {
        let labels = pairs.into_iter().map(|(u, g)| (u.to_string(), g)).collect();
        Self::new(attribute, labels, ["0".into(), "1".into()])
    }

    pub fn labels(&self) -> &BTreeMap<String, u8> {
        &self.labels
    }

    pub fn group_of(&self, user: &str) -> Option<u8> {
        self.labels.get(user).copied()
    }

    pub fn group_shares(&self) -> [f64; 2] {
        self.group_shares
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn members(&self, group: u8) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .filter(move |(_, &g)| g == group)
            .map(|(u, _)| u.as_str())
    }

    /// Same users with groups swapped (shares and names follow).
    pub fn swapped(&self) -> Self {
        Self {
            attribute: self.attribute.clone(),
            labels: self.labels.iter().map(|(u, &g)| (u.clone(), 1 - g)).collect(),
            group_shares: [self.group_shares[1], self.group_shares[0]],
            group_names: [self.group_names[1].clone(), self.group_names[0].clone()],
        }
    }

    /// Checks the type invariants, and that every real user of `set` is labeled.
    pub fn validate(&self, set: Option<&InteractionSet>) -> Result<()> {
        let recomputed = Self::new(self.attribute.clone(), self.labels.clone(), self.group_names.clone())?;
        for g in 0..2 {
            if (recomputed.group_shares[g] - self.group_shares[g]).abs() > 1e-12 {
                return Err(Error::invalid("stored group shares do not match labels"));
            }
        }
        if let Some(set) = set {
            for user in set.users().filter(|u| !is_synthetic_user(u)) {
                if !self.labels.contains_key(user) {
                    return Err(Error::MissingAttribute {
                        user: user.to_string(),
                        attribute: self.attribute.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Tab-separated `user, group` rows after `#`-prefixed metadata lines.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "#attribute\t{}\n#group0\t{}\n#group1\t{}\n",
            self.attribute, self.group_names[0], self.group_names[1]
        );
        for (user, g) in &self.labels {
            out.push_str(&format!("{user}\t{g}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut attribute = String::new();
        let mut names = ["0".to_string(), "1".to_string()];
        let mut labels = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let malformed = |m: &str| Error::MalformedRow {
                path: path.to_path_buf(),
                line: n + 1,
                message: m.to_string(),
            };
            let (key, value) = line.split_once('\t').ok_or_else(|| malformed("expected two fields"))?;
            match key {
                "#attribute" => attribute = value.to_string(),
                "#group0" => names[0] = value.to_string(),
                "#group1" => names[1] = value.to_string(),
                _ => {
                    let g: u8 = value.parse().map_err(|_| malformed("group must be 0 or 1"))?;
                    labels.insert(key.to_string(), g);
                }
            }
        }
        Self::new(attribute, labels, names)
    }
}

fn ordered_categories(values: impl Iterator<Item = String>) -> Vec<String> {
    let mut cats: Vec<String> = values.collect();
    cats.sort();
    cats.dedup();
    let numeric: Option<Vec<f64>> = cats.iter().map(|c| c.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(cats).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        return paired.into_iter().map(|(_, c)| c).collect();
    }
    cats
}

/// Splits the users of `users` into two groups by `attribute`.
///
/// Categories are ordered numerically when every label parses as a number,
/// lexicographically otherwise. The cut between consecutive categories that
/// minimizes the share imbalance is chosen (lowest cut on ties); the smaller
/// side becomes group 1 (the higher categories on equal shares). A binary
/// attribute has a single cut, so it passes through unchanged.
pub fn binarize_attribute(
    table: &AttributeTable,
    attribute: &str,
    users: &InteractionSet,
) -> Result<GroupAssignment> {
    let mut values: BTreeMap<String, String> = BTreeMap::new();
    for user in users.users().filter(|u| !is_synthetic_user(u)) {
        let v = table.get(user, attribute).ok_or_else(|| Error::MissingAttribute {
            user: user.to_string(),
            attribute: attribute.to_string(),
        })?;
        values.insert(user.to_string(), v.to_string());
    }
    let cats = ordered_categories(values.values().cloned());
    if cats.len() < 2 {
        return Err(Error::SingleCategory(attribute.to_string()));
    }
    let mut counts = vec![0usize; cats.len()];
    let position: BTreeMap<&str, usize> = cats.iter().enumerate().map(|(k, c)| (c.as_str(), k)).collect();
    for v in values.values() {
        counts[position[v.as_str()]] += 1;
    }

    // cut c: low = cats[..c], high = cats[c..]
    let mut best_cut = 1;
    // imbalance |low - high| in user counts, exact
    let mut best_imbalance = usize::MAX;
    let mut low = 0usize;
    for c in 1..cats.len() {
        low += counts[c - 1];
        let imbalance = low.abs_diff(values.len() - low);
        if imbalance < best_imbalance {
            best_imbalance = imbalance;
            best_cut = c;
        }
    }
    let low_count: usize = counts[..best_cut].iter().sum();
    let high_count = values.len() - low_count;
    // group 1 is the smaller side; on equal shares the higher categories
    let low_is_minority = low_count < high_count;

    let numeric = cats.iter().all(|c| c.parse::<f64>().is_ok());
    let (low_name, high_name) = if cats.len() == 2 {
        (cats[0].clone(), cats[1].clone())
    } else if numeric {
        (format!("<{}", cats[best_cut]), format!(">={}", cats[best_cut]))
    } else {
        (cats[..best_cut].join("|"), cats[best_cut..].join("|"))
    };
    let names = if low_is_minority {
        [high_name, low_name]
    } else {
        [low_name, high_name]
    };

    let labels = values
        .into_iter()
        .map(|(user, v)| {
            let is_low = position[v.as_str()] < best_cut;
            (user, u8::from(is_low == low_is_minority))
        })
        .collect();
    GroupAssignment::new(attribute, labels, names)
}
