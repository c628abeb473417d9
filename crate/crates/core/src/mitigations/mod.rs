//! Consumer-fairness mitigation procedures.

mod adjust;
mod antidote;
mod kamishima;
mod rerank;
mod resample;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adjust::{adjust_ratings, adjust_topn, group_offsets, AdjustMode};
pub use antidote::{antidote_augment, AntidoteOutcome, AntidoteProblem, AntidoteSettings};
pub use kamishima::{
    fit_pmf_independent, penalty, penalty_model_grad, penalty_on, penalty_pred_grad, IndependenceTerm, KamishimaHook,
};
pub use rerank::{rerank_fair, RerankOutcome};
pub use resample::{resample_balanced, BalanceBy};

use crate::data::{GroupAssignment, InteractionSet};
use crate::error::{Error, Result};
use crate::metrics::Task;
use crate::models::{fit_slim_u, FittedModel, ModelFamily, ModelSpec, ParamValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationKind {
    Resample,
    Kamishima,
    SlimBalance,
    LiRerank,
    AshokanAdjust,
    Antidote,
}

/// When a mitigation intervenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pre,
    In,
    Post,
}

impl MitigationKind {
    pub const ALL: [MitigationKind; 6] = [
        MitigationKind::Resample,
        MitigationKind::Kamishima,
        MitigationKind::SlimBalance,
        MitigationKind::LiRerank,
        MitigationKind::AshokanAdjust,
        MitigationKind::Antidote,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MitigationKind::Resample => "resample",
            MitigationKind::Kamishima => "kamishima",
            MitigationKind::SlimBalance => "slim_balance",
            MitigationKind::LiRerank => "li_rerank",
            MitigationKind::AshokanAdjust => "ashokan_adjust",
            MitigationKind::Antidote => "antidote",
        }
    }

    /// Procedure label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            MitigationKind::Resample => "Ekstrand et al.",
            MitigationKind::Kamishima => "Kamishima et al.",
            MitigationKind::SlimBalance => "Burke et al.",
            MitigationKind::LiRerank => "Li et al.",
            MitigationKind::AshokanAdjust => "Ashokan and Haas",
            MitigationKind::Antidote => "Rastegarpanah et al.",
        }
    }

    pub fn stage(self) -> Stage {
        match self {
            MitigationKind::Resample | MitigationKind::Antidote => Stage::Pre,
            MitigationKind::Kamishima | MitigationKind::SlimBalance => Stage::In,
            MitigationKind::LiRerank | MitigationKind::AshokanAdjust => Stage::Post,
        }
    }

    /// Model families the procedure attaches to.
    pub fn families(self) -> &'static [ModelFamily] {
        match self {
            MitigationKind::Resample | MitigationKind::LiRerank | MitigationKind::AshokanAdjust => &ModelFamily::ALL,
            MitigationKind::Kamishima => &[ModelFamily::MfSgd],
            MitigationKind::SlimBalance => &[ModelFamily::SlimU],
            MitigationKind::Antidote => &[ModelFamily::Als],
        }
    }

    pub fn tasks(self) -> &'static [Task] {
        match self {
            MitigationKind::LiRerank => &[Task::Topn],
            _ => &[Task::Topn, Task::Rating],
        }
    }

    /// `(key, allowed text values)`; an empty slice means numeric.
    fn keys(self) -> &'static [(&'static str, &'static [&'static str])] {
        match self {
            MitigationKind::Resample => &[("by", &["interactions", "users"])],
            MitigationKind::Kamishima => &[("term", &["mean_m", "bdist_m", "mi_normal"]), ("eta", &[])],
            MitigationKind::SlimBalance => &[("lambda_bal", &[])],
            MitigationKind::LiRerank => &[("pool", &[]), ("epsilon", &[]), ("epsilon_frac", &[])],
            MitigationKind::AshokanAdjust => &[("mode", &["value", "parity"])],
            MitigationKind::Antidote => &[("budget", &[]), ("step", &[]), ("iterations", &[])],
        }
    }
}

impl fmt::Display for MitigationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MitigationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MitigationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mitigation {s:?}")))
    }
}

/// Whether `kind` may be applied to `family` under `task`.
pub fn is_compatible(kind: MitigationKind, family: ModelFamily, task: Task) -> bool {
    kind.families().contains(&family) && kind.tasks().contains(&task)
}

/// Compatibility matrix as `(mitigation, family, topn allowed, rating allowed)`.
pub fn compatibility_matrix() -> Vec<(MitigationKind, ModelFamily, bool, bool)> {
    let mut out = Vec::new();
    for kind in MitigationKind::ALL {
        for family in ModelFamily::ALL {
            out.push((kind, family, is_compatible(kind, family, Task::Topn), is_compatible(kind, family, Task::Rating)));
        }
    }
    out
}

/// Compatibility matrix as tab-separated text with a header row.
pub fn compatibility_tsv() -> String {
    let mut out = String::from("mitigation\tfamily\ttopn\trating\n");
    for (k, f, t, r) in compatibility_matrix() {
        out.push_str(&format!("{k}\t{f}\t{t}\t{r}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationSpec {
    pub kind: MitigationKind,
    pub params: BTreeMap<String, ParamValue>,
    pub seed: u64,
}

impl MitigationSpec {
    pub fn new(kind: MitigationKind) -> Self {
        Self {
            kind,
            params: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<ParamValue>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn num(&self, key: &str, default: f64) -> f64 {
        match self.params.get(key) {
            Some(ParamValue::Num(x)) => *x,
            _ => default,
        }
    }

    pub fn text<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        match self.params.get(key) {
            Some(ParamValue::Text(s)) => s,
            _ => default,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let keys = self.kind.keys();
        for (key, value) in &self.params {
            let Some((_, options)) = keys.iter().find(|(k, _)| k == key) else {
                return Err(Error::Config(format!("{}: unknown parameter {key}", self.kind)));
            };
            match value {
                ParamValue::Num(x) if options.is_empty() => {
                    // epsilon may be infinite
                    if x.is_nan() || *x < 0.0 || (x.is_infinite() && key != "epsilon") {
                        return Err(Error::Config(format!("{}: {key} must be a non-negative number", self.kind)));
                    }
                }
                ParamValue::Text(s) if options.contains(&s.as_str()) => {}
                ParamValue::Text(s) if options.is_empty() && (s == "inf" || s == "infinity") && key == "epsilon" => {}
                _ => {
                    return Err(Error::Config(format!("{}: invalid value {value} for {key}", self.kind)));
                }
            }
        }
        Ok(())
    }

    /// Checks parameters and the compatibility matrix.
    pub fn validate_for(&self, family: ModelFamily, task: Task) -> Result<()> {
        self.validate()?;
        if !is_compatible(self.kind, family, task) {
            return Err(Error::Incompatible(format!(
                "{} cannot be applied to {family} for the {task:?} task",
                self.kind
            )));
        }
        Ok(())
    }

    /// Fairness tolerance for the re-ranker; `epsilon_frac` is relative to
    /// the base gap and takes precedence.
    pub fn rerank_epsilon(&self, base_gap: f64) -> f64 {
        if let Some(ParamValue::Num(f)) = self.params.get("epsilon_frac") {
            return f * base_gap.abs();
        }
        match self.params.get("epsilon") {
            Some(ParamValue::Num(e)) => *e,
            Some(ParamValue::Text(_)) => f64::INFINITY,
            None => 0.0,
        }
    }
}

impl fmt::Display for MitigationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        write!(f, " seed={}", self.seed)
    }
}

/// SLIM-U with the group-balance penalty.
pub fn apply_slim_balance(train: &InteractionSet, groups: &GroupAssignment, lambda_bal: f64, spec: &ModelSpec) -> Result<FittedModel> {
    if spec.family != ModelFamily::SlimU {
        return Err(Error::Incompatible(format!("slim_balance needs slim_u, got {}", spec.family)));
    }
    fit_slim_u(train, spec, Some((groups, lambda_bal)))
}
