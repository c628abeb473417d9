//! Post-hoc group rating adjustments.

use serde::{Deserialize, Serialize};

use crate::data::{GroupAssignment, InteractionSet};
use crate::error::{Error, Result};
use crate::models::{ScoreTable, Scorer, TopNLists};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustMode {
    /// Add each group's mean train residual (actual - predicted).
    Value,
    /// Add `mean train prediction(group 0) - mean train prediction(group 1)`
    /// to group 1.
    Parity,
}

impl AdjustMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "value" => Ok(AdjustMode::Value),
            "parity" => Ok(AdjustMode::Parity),
            _ => Err(Error::Config(format!("unknown adjustment mode {s:?}"))),
        }
    }
}

/// Per-group offsets computed on the train pairs.
pub fn group_offsets(model: &(impl Scorer + ?Sized), train: &InteractionSet, groups: &GroupAssignment, mode: AdjustMode) -> Result<[f64; 2]> {
    let mut pred = [0.0; 2];
    let mut actual = [0.0; 2];
    let mut n = [0usize; 2];
    for r in train.interactions() {
        if let Some(g) = groups.group_of(&r.user) {
            let g = g as usize;
            pred[g] += model.score(&r.user, &r.item);
            actual[g] += r.rating;
            n[g] += 1;
        }
    }
    for (g, &c) in n.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyGroup(g as u8));
        }
    }
    let mean_pred = [pred[0] / n[0] as f64, pred[1] / n[1] as f64];
    Ok(match mode {
        AdjustMode::Value => [actual[0] / n[0] as f64 - mean_pred[0], actual[1] / n[1] as f64 - mean_pred[1]],
        AdjustMode::Parity => [0.0, mean_pred[0] - mean_pred[1]],
    })
}

fn shifted(score: f64, user: &str, groups: &GroupAssignment, offsets: [f64; 2], model: &(impl Scorer + ?Sized)) -> f64 {
    let x = match groups.group_of(user) {
        Some(g) => score + offsets[g as usize],
        None => score,
    };
    // only rating predictions have a scale to clip to
    match model.rating_scale() {
        Some(scale) => scale.clamp(x),
        None => x,
    }
}

/// Adjusted copy of `predictions`.
pub fn adjust_ratings(
    predictions: &ScoreTable,
    model: &(impl Scorer + ?Sized),
    train: &InteractionSet,
    groups: &GroupAssignment,
    mode: AdjustMode,
) -> Result<ScoreTable> {
    let offsets = group_offsets(model, train, groups, mode)?;
    Ok(predictions.map_scores(|u, _, s| shifted(s, u, groups, offsets, model)))
}

/// Adjusts the scores attached to recommendation lists. The shift is
/// constant per user, so the order within each list is unchanged.
pub fn adjust_topn(
    lists: &TopNLists,
    model: &(impl Scorer + ?Sized),
    train: &InteractionSet,
    groups: &GroupAssignment,
    mode: AdjustMode,
) -> Result<TopNLists> {
    let offsets = group_offsets(model, train, groups, mode)?;
    Ok(lists
        .iter()
        .map(|(u, l)| (u.clone(), l.iter().map(|(i, s)| (i.clone(), shifted(*s, u, groups, offsets, model))).collect()))
        .collect())
}
