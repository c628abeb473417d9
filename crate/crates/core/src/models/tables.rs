use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Predicted relevance per (user, item), in canonical (sorted) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<String, BTreeMap<String, f64>>,
    len: usize,
}

impl FromIterator<(String, String, f64)> for ScoreTable {
    fn from_iter<T: IntoIterator<Item = (String, String, f64)>>(iter: T) -> Self {
        let mut out = ScoreTable::default();
        for (u, i, s) in iter {
            out.insert(&u, &i, s);
        }
        out
    }
}

impl ScoreTable {
    pub fn get(&self, user: &str, item: &str) -> Option<f64> {
        self.scores.get(user)?.get(item).copied()
    }

    pub fn try_get(&self, user: &str, item: &str) -> Result<f64> {
        self.get(user, item).ok_or_else(|| Error::MissingPair {
            user: user.to_string(),
            item: item.to_string(),
        })
    }

    pub fn insert(&mut self, user: &str, item: &str, score: f64) {
        let row = self.scores.entry(user.to_string()).or_default();
        if row.insert(item.to_string(), score).is_none() {
            self.len += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.scores
            .iter()
            .flat_map(|(u, row)| row.iter().map(move |(i, s)| (u.as_str(), i.as_str(), *s)))
    }

    /// Scores of one user's pairs, keyed by item.
    pub fn user_scores(&self, user: &str) -> Option<&BTreeMap<String, f64>> {
        self.scores.get(user)
    }

    pub fn map_scores(&self, mut f: impl FnMut(&str, &str, f64) -> f64) -> ScoreTable {
        self.iter().map(|(u, i, s)| (u.to_string(), i.to_string(), f(u, i, s))).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|(_, _, s)| s.is_finite())
    }

    /// Tab-separated `user, item, score` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (u, i, s) in self.iter() {
            let _ = writeln!(out, "{u}\t{i}\t{s}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = ScoreTable::default();
        for (n, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let score = (f.len() == 3).then(|| f[2].parse::<f64>().ok()).flatten();
            let Some(score) = score else {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: "expected user, item, score".into(),
                });
            };
            out.insert(f[0], f[1], score);
        }
        Ok(out)
    }
}

/// Ranked recommendation lists per user, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopNLists {
    lists: BTreeMap<String, Vec<(String, f64)>>,
}

impl FromIterator<(String, Vec<(String, f64)>)> for TopNLists {
    fn from_iter<T: IntoIterator<Item = (String, Vec<(String, f64)>)>>(iter: T) -> Self {
        Self {
            lists: iter.into_iter().collect(),
        }
    }
}

impl TopNLists {
    pub fn get(&self, user: &str) -> Option<&[(String, f64)]> {
        self.lists.get(user).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<(String, f64)>)> {
        self.lists.iter()
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn insert(&mut self, user: &str, list: Vec<(String, f64)>) {
        self.lists.insert(user.to_string(), list);
    }

    /// Every list cut to its first `n` entries.
    pub fn truncated(&self, n: usize) -> TopNLists {
        self.lists
            .iter()
            .map(|(u, l)| (u.clone(), l.iter().take(n).cloned().collect()))
            .collect()
    }

    /// Tab-separated `user, rank (1-based), item, score` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (u, list) in &self.lists {
            for (rank, (i, s)) in list.iter().enumerate() {
                let _ = writeln!(out, "{u}\t{}\t{i}\t{s}", rank + 1);
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lists: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = (f.len() == 4)
                .then(|| Some((f[1].parse::<usize>().ok()?, f[3].parse::<f64>().ok()?)))
                .flatten();
            let Some((rank, score)) = parsed else {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: "expected user, rank, item, score".into(),
                });
            };
            lists.entry(f[0].to_string()).or_default().push((rank, f[2].to_string(), score));
        }
        Ok(lists
            .into_iter()
            .map(|(u, mut l)| {
                l.sort_by_key(|e| e.0);
                (u, l.into_iter().map(|(_, i, s)| (i, s)).collect())
            })
            .collect())
    }
}
