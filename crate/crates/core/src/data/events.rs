use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use super::attributes::AttributeTable;
use super::interactions::{Interaction, InteractionSet, RatingScale};
use crate::error::{Error, Result};

/// `plays` listening events of `user` on `artist`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayEvent {
    pub user: String,
    pub artist: String,
    pub plays: u64,
}

impl PlayEvent {
    pub fn new(user: impl Into<String>, artist: impl Into<String>, plays: u64) -> Self {
        Self {
            user: user.into(),
            artist: artist.into(),
            plays,
        }
    }
}

/// Reads a Last.fm 1K listening log
/// (`userid, timestamp, artist-mbid, artist-name, track-mbid, track-name`).
/// Each line is one play; the artist key is the MBID, or the name when the
/// MBID is empty.
pub fn load_lfm_events(path: &Path) -> Result<Vec<PlayEvent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let user = fields.first().map(|s| s.trim()).unwrap_or("");
        let mbid = fields.get(2).map(|s| s.trim()).unwrap_or("");
        let name = fields.get(3).map(|s| s.trim()).unwrap_or("");
        let artist = if mbid.is_empty() { name } else { mbid };
        if user.is_empty() || artist.is_empty() {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: n + 1,
                message: "missing user or artist".into(),
            });
        }
        out.push(PlayEvent::new(user, artist, 1));
    }
    Ok(out)
}

/// Output of [`aggregate_and_normalize_events`].
#[derive(Debug, Clone)]
pub struct NormalizedEvents {
    pub interactions: InteractionSet,
    pub attributes: AttributeTable,
    /// Global min and max of `ln(1 + plays)` after filtering.
    pub log_min: f64,
    pub log_max: f64,
    /// True when every retained pair had the same play count.
    pub degenerate: bool,
}

/// Aggregates play events per (user, artist) and maps play counts onto the
/// 1–5 scale.
///
/// Users without gender or age, with age `<= age_bounds.0` or
/// `>= age_bounds.1`, or with fewer than `min_items` distinct artists are
/// dropped. Ratings are `1 + 4 (ln(1+plays) - m) / (M - m)` with global
/// `m`, `M` computed after filtering.
pub fn aggregate_and_normalize_events(
    events: &[PlayEvent],
    attributes: &AttributeTable,
    min_items: usize,
    age_bounds: (i64, i64),
) -> Result<NormalizedEvents> {
    if min_items == 0 {
        return Err(Error::invalid("min_items must be at least 1"));
    }
    let eligible = |user: &str| -> bool {
        let gender_ok = attributes.get(user, "gender").is_some();
        let age_ok = attributes
            .get(user, "age")
            .and_then(|a| a.parse::<i64>().ok())
            .is_some_and(|a| a > age_bounds.0 && a < age_bounds.1);
        gender_ok && age_ok
    };

    let mut plays: IndexMap<(String, String), u64> = IndexMap::new();
    let mut eligible_cache: HashMap<&str, bool> = HashMap::new();
    for ev in events {
        if ev.plays == 0 {
            return Err(Error::invalid(format!(
                "event for ({}, {}) has zero plays",
                ev.user, ev.artist
            )));
        }
        if !*eligible_cache
            .entry(ev.user.as_str())
            .or_insert_with(|| eligible(&ev.user))
        {
            continue;
        }
        *plays.entry((ev.user.clone(), ev.artist.clone())).or_insert(0) += ev.plays;
    }

    let mut distinct: BTreeMap<&str, usize> = BTreeMap::new();
    for (user, _) in plays.keys() {
        *distinct.entry(user.as_str()).or_insert(0) += 1;
    }
    let kept: Vec<(&(String, String), u64)> = plays
        .iter()
        .filter(|((u, _), _)| distinct[u.as_str()] >= min_items)
        .map(|(k, &v)| (k, v))
        .collect();
    if kept.is_empty() {
        return Err(Error::Empty("every user was filtered out".into()));
    }

    let logs: Vec<f64> = kept.iter().map(|(_, p)| (*p as f64).ln_1p()).collect();
    let m = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let big_m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = big_m <= m;
    if degenerate {
        log::warn!("all play counts are equal; every rating is set to 5");
    }
    let rows = kept
        .iter()
        .zip(&logs)
        .map(|(((user, artist), _), &l)| {
            let rating = if degenerate {
                5.0
            } else {
                (1.0 + 4.0 * (l - m) / (big_m - m)).clamp(1.0, 5.0)
            };
            Interaction::new(user.clone(), artist.clone(), rating)
        })
        .collect();
    let interactions = InteractionSet::new(rows, RatingScale::FIVE_STAR)?;

    let mut attrs = attributes.clone();
    attrs.retain_users(|u| interactions.user_idx(u).is_some());
    Ok(NormalizedEvents {
        interactions,
        attributes: attrs,
        log_min: m,
        log_max: big_m,
        degenerate,
    })
}
