use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Popularity,
    AvgRating,
    UserKnn,
    ItemKnn,
    MfSgd,
    Als,
    SlimU,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 7] = [
        ModelFamily::Popularity,
        ModelFamily::AvgRating,
        ModelFamily::UserKnn,
        ModelFamily::ItemKnn,
        ModelFamily::MfSgd,
        ModelFamily::Als,
        ModelFamily::SlimU,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Popularity => "popularity",
            ModelFamily::AvgRating => "avg_rating",
            ModelFamily::UserKnn => "user_knn",
            ModelFamily::ItemKnn => "item_knn",
            ModelFamily::MfSgd => "mf_sgd",
            ModelFamily::Als => "als",
            ModelFamily::SlimU => "slim_u",
        }
    }

    /// Display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::Popularity => "TopPopular",
            ModelFamily::AvgRating => "AvgRating",
            ModelFamily::UserKnn => "UserKNN",
            ModelFamily::ItemKnn => "ItemKNN",
            ModelFamily::MfSgd => "MF",
            ModelFamily::Als => "ALS",
            ModelFamily::SlimU => "SLIM-U",
        }
    }

    /// `(key, must be strictly positive)` for the numeric hyperparameters
    /// the family understands.
    fn numeric_keys(self) -> &'static [(&'static str, bool)] {
        match self {
            ModelFamily::Popularity => &[],
            ModelFamily::AvgRating => &[("damping", false)],
            ModelFamily::UserKnn | ModelFamily::ItemKnn => &[("neighbors", true), ("shrinkage", false)],
            ModelFamily::MfSgd => &[
                ("factors", true),
                ("lr", true),
                ("reg", false),
                ("epochs", true),
                ("init_scale", false),
                ("batch_size", true),
            ],
            ModelFamily::Als => &[("factors", true), ("reg", true), ("epochs", true), ("tol", false), ("init_scale", false)],
            ModelFamily::SlimU => &[
                ("l1", false),
                ("l2", false),
                ("max_sweeps", true),
                ("tol", false),
            ],
        }
    }

    fn text_keys(self) -> &'static [(&'static str, &'static [&'static str])] {
        match self {
            ModelFamily::UserKnn | ModelFamily::ItemKnn => &[("similarity", &["cosine", "pearson"])],
            ModelFamily::MfSgd => &[("variant", &["funk", "biased", "pmf"])],
            _ => &[],
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Num(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for ParamValue {
    fn from(x: f64) -> Self {
        ParamValue::Num(x)
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Text(s.to_string())
    }
}

impl ParamValue {
    /// Numbers stay numbers; anything else is text.
    pub fn parse(s: &str) -> Self {
        s.parse::<f64>().map_or_else(|_| ParamValue::Text(s.to_string()), ParamValue::Num)
    }
}

/// Model family plus hyperparameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub params: BTreeMap<String, ParamValue>,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: ModelFamily) -> Self {
        Self {
            family,
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

    pub fn int(&self, key: &str, default: usize) -> usize {
        self.num(key, default as f64).round().max(0.0) as usize
    }

    pub fn text<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        match self.params.get(key) {
            Some(ParamValue::Text(s)) => s,
            _ => default,
        }
    }

    /// Rejects unknown keys, wrongly typed values, non-positive values where
    /// a positive one is required, and unknown enumerated options.
    pub fn validate(&self) -> Result<()> {
        let numeric = self.family.numeric_keys();
        let text = self.family.text_keys();
        for (key, value) in &self.params {
            if let Some((_, positive)) = numeric.iter().find(|(k, _)| k == key) {
                match value {
                    ParamValue::Num(x) if !x.is_finite() => {
                        return Err(Error::Config(format!("{}: {key} must be finite", self.family)))
                    }
                    ParamValue::Num(x) if *positive && *x <= 0.0 => {
                        return Err(Error::Config(format!("{}: {key} must be positive", self.family)))
                    }
                    ParamValue::Num(x) if *x < 0.0 => {
                        return Err(Error::Config(format!("{}: {key} must be non-negative", self.family)))
                    }
                    ParamValue::Num(_) => {}
                    ParamValue::Text(_) => {
                        return Err(Error::Config(format!("{}: {key} must be numeric", self.family)))
                    }
                }
            } else if let Some((_, options)) = text.iter().find(|(k, _)| k == key) {
                match value {
                    ParamValue::Text(s) if options.contains(&s.as_str()) => {}
                    _ => {
                        return Err(Error::Config(format!(
                            "{}: {key} must be one of {options:?}",
                            self.family
                        )))
                    }
                }
            } else {
                return Err(Error::Config(format!("{}: unknown hyperparameter {key}", self.family)));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        write!(f, " seed={}", self.seed)
    }
}
