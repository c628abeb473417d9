use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// User ids starting with this prefix belong to generated (antidote) users.
/// They never appear in loaded data and are excluded from evaluation.
pub const SYNTHETIC_PREFIX: &str = "~synthetic:";

pub fn is_synthetic_user(user: &str) -> bool {
    user.starts_with(SYNTHETIC_PREFIX)
}

pub fn synthetic_user_id(n: usize) -> String {
    format!("{SYNTHETIC_PREFIX}{n}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub lo: f64,
    pub hi: f64,
}

impl RatingScale {
    pub const FIVE_STAR: RatingScale = RatingScale { lo: 1.0, hi: 5.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("bad rating scale [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.lo, self.hi)
    }
}

impl Default for RatingScale {
    fn default() -> Self {
        Self::FIVE_STAR
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            rating,
            timestamp: None,
        }
    }

    pub fn at(mut self, timestamp: i64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }
}

/// An ordered collection of ratings with contiguous user and item indices.
///
/// Indices are assigned in order of first appearance, so row order fully
/// determines the index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    interactions: Vec<Interaction>,
    rows: Vec<(usize, usize)>,
    user_index: IndexMap<String, usize>,
    item_index: IndexMap<String, usize>,
    scale: RatingScale,
}

impl InteractionSet {
    /// Builds a set, rejecting out-of-scale ratings and duplicate pairs.
    /// Errors report 1-based row positions.
    pub fn new(interactions: Vec<Interaction>, scale: RatingScale) -> Result<Self> {
        Self::with_lines(interactions, scale, None)
    }

    pub fn empty(scale: RatingScale) -> Self {
        Self {
            interactions: Vec::new(),
            rows: Vec::new(),
            user_index: IndexMap::new(),
            item_index: IndexMap::new(),
            scale,
        }
    }

    fn with_lines(
        interactions: Vec<Interaction>,
        scale: RatingScale,
        lines: Option<&[usize]>,
    ) -> Result<Self> {
        let mut user_index = IndexMap::new();
        let mut item_index = IndexMap::new();
        let mut rows = Vec::with_capacity(interactions.len());
        let mut seen = HashSet::with_capacity(interactions.len());
        for (pos, it) in interactions.iter().enumerate() {
            let line = lines.map_or(pos + 1, |l| l[pos]);
            if !it.rating.is_finite() || !scale.contains(it.rating) {
                return Err(Error::RatingOutOfScale {
                    line,
                    rating: it.rating,
                    lo: scale.lo,
                    hi: scale.hi,
                });
            }
            let n = user_index.len();
            let u = *user_index.entry(it.user.clone()).or_insert(n);
            let n = item_index.len();
            let i = *item_index.entry(it.item.clone()).or_insert(n);
            if !seen.insert((u, i)) {
                return Err(Error::DuplicatePair {
                    line,
                    user: it.user.clone(),
                    item: it.item.clone(),
                });
            }
            rows.push((u, i));
        }
        Ok(Self {
            interactions,
            rows,
            user_index,
            item_index,
            scale,
        })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn into_interactions(self) -> Vec<Interaction> {
        self.interactions
    }

    /// `(user index, item index)` of each row.
    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.user_index.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_index.len()
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn user_index(&self) -> &IndexMap<String, usize> {
        &self.user_index
    }

    pub fn item_index(&self) -> &IndexMap<String, usize> {
        &self.item_index
    }

    pub fn user_idx(&self, user: &str) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    pub fn item_idx(&self, item: &str) -> Option<usize> {
        self.item_index.get(item).copied()
    }

    pub fn user_id(&self, idx: usize) -> &str {
        self.user_index.get_index(idx).map(|(k, _)| k.as_str()).unwrap()
    }

    pub fn item_id(&self, idx: usize) -> &str {
        self.item_index.get_index(idx).map(|(k, _)| k.as_str()).unwrap()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.user_index.keys().map(String::as_str)
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.item_index.keys().map(String::as_str)
    }

    /// Row positions grouped by user index.
    pub fn rows_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for (pos, &(u, _)) in self.rows.iter().enumerate() {
            out[u].push(pos);
        }
        out
    }

    /// Row positions grouped by item index.
    pub fn rows_by_item(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_items()];
        for (pos, &(_, i)) in self.rows.iter().enumerate() {
            out[i].push(pos);
        }
        out
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        Some(self.interactions.iter().map(|r| r.rating).sum::<f64>() / self.len() as f64)
    }

    /// Keeps the rows for which `keep` holds, preserving order and
    /// rebuilding the index maps.
    pub fn filter(&self, mut keep: impl FnMut(&Interaction) -> bool) -> InteractionSet {
        let kept: Vec<Interaction> = self
            .interactions
            .iter()
            .filter(|it| keep(it))
            .cloned()
            .collect();
        Self::new(kept, self.scale).expect("subset of a valid set is valid")
    }

    /// Appends rows from `other` (same scale). Duplicate pairs are an error.
    pub fn concat(&self, other: &InteractionSet) -> Result<InteractionSet> {
        let mut all = self.interactions.clone();
        all.extend(other.interactions.iter().cloned());
        Self::new(all, self.scale)
    }

    pub fn has_synthetic_users(&self) -> bool {
        self.users().any(is_synthetic_user)
    }

    /// Drops generated users.
    pub fn real_only(&self) -> InteractionSet {
        if !self.has_synthetic_users() {
            return self.clone();
        }
        self.filter(|it| !is_synthetic_user(&it.user))
    }

    /// Checks every type invariant. Constructors already enforce these;
    /// this re-verifies after transformations.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::new(self.interactions.clone(), self.scale)?;
        if rebuilt.rows != self.rows
            || rebuilt.user_index != self.user_index
            || rebuilt.item_index != self.item_index
        {
            return Err(Error::invalid("index maps out of sync with rows"));
        }
        for (k, (name, &v)) in self.user_index.iter().enumerate() {
            if k != v {
                return Err(Error::invalid(format!("user index of {name} is not contiguous")));
            }
        }
        for (k, (name, &v)) in self.item_index.iter().enumerate() {
            if k != v {
                return Err(Error::invalid(format!("item index of {name} is not contiguous")));
            }
        }
        Ok(())
    }

    /// Tab-separated `user, item, rating, timestamp` lines; an absent
    /// timestamp is an empty field.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        for it in &self.interactions {
            let _ = write!(out, "{}\t{}\t{}\t", it.user, it.item, it.rating);
            if let Some(t) = it.timestamp {
                let _ = write!(out, "{t}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_canonical(&self, path: &Path) -> Result<()> {
        for it in &self.interactions {
            if it.user.contains(['\t', '\n']) || it.item.contains(['\t', '\n']) {
                return Err(Error::invalid(format!(
                    "id contains a tab or newline: {:?}/{:?}",
                    it.user, it.item
                )));
            }
        }
        fs::write(path, self.to_canonical_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_canonical(path: &Path, scale: RatingScale) -> Result<InteractionSet> {
        load_interactions(path, &FormatSpec::canonical(), scale)
    }

    /// SHA-256 of the canonical serialization (plus scale).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}:{}\n", self.scale.lo, self.scale.hi));
        h.update(self.to_canonical_string());
        hex::encode(h.finalize())
    }
}

/// Column layout of a delimited rating file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub delimiter: String,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    pub timestamp_col: Option<usize>,
    /// Skip the first line.
    pub header: bool,
    /// Lines starting with this prefix are ignored.
    pub comment: Option<String>,
}

impl FormatSpec {
    pub fn csv() -> Self {
        Self {
            delimiter: ",".into(),
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            timestamp_col: Some(3),
            header: false,
            comment: None,
        }
    }

    /// MovieLens 1M `ratings.dat`: `UserID::MovieID::Rating::Timestamp`.
    pub fn ml1m() -> Self {
        Self {
            delimiter: "::".into(),
            ..Self::csv()
        }
    }

    /// The canonical tab-separated layout written by this crate.
    pub fn canonical() -> Self {
        Self {
            delimiter: "\t".into(),
            ..Self::csv()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ml1m" | "ml-1m" => Some(Self::ml1m()),
            "canonical" | "tsv" | "lfm" | "lfm1k" => Some(Self::canonical()),
            "csv" => Some(Self::csv()),
            _ => None,
        }
    }
}

/// Reads a delimited rating file. Row order is preserved; the timestamp
/// column is optional per row (missing or empty field means no timestamp).
pub fn load_interactions(
    path: &Path,
    format: &FormatSpec,
    scale: RatingScale,
) -> Result<InteractionSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |line: usize, message: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut interactions = Vec::new();
    let mut lines = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        if (format.header && n == 0) || raw.trim().is_empty() {
            continue;
        }
        if let Some(c) = &format.comment {
            if raw.starts_with(c.as_str()) {
                continue;
            }
        }
        let fields: Vec<&str> = raw.split(format.delimiter.as_str()).collect();
        let field = |col: usize, what: &str| {
            fields
                .get(col)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| malformed(line_no, format!("missing {what} column {col}")))
        };
        let user = field(format.user_col, "user")?;
        let item = field(format.item_col, "item")?;
        let rating_text = field(format.rating_col, "rating")?;
        let rating: f64 = rating_text
            .parse()
            .map_err(|_| malformed(line_no, format!("unparsable rating {rating_text:?}")))?;
        let timestamp = match format.timestamp_col.and_then(|c| fields.get(c)) {
            Some(t) if !t.trim().is_empty() => Some(
                t.trim()
                    .parse::<i64>()
                    .map_err(|_| malformed(line_no, format!("unparsable timestamp {t:?}")))?,
            ),
            _ => None,
        };
        interactions.push(Interaction {
            user: user.to_string(),
            item: item.to_string(),
            rating,
            timestamp,
        });
        lines.push(line_no);
    }
    InteractionSet::with_lines(interactions, scale, Some(&lines))
}

/// Removes users with fewer than `k` interactions (single pass).
pub fn filter_min_interactions(set: &InteractionSet, k: usize) -> Result<InteractionSet> {
    if k == 0 {
        return Ok(set.clone());
    }
    let counts: Vec<usize> = set.rows_by_user().iter().map(Vec::len).collect();
    let out = set.filter(|it| counts[set.user_idx(&it.user).unwrap()] >= k);
    if out.is_empty() {
        return Err(Error::Empty(format!("no user has at least {k} interactions")));
    }
    Ok(out)
}
