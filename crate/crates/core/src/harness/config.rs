//! Experiment configuration files.
//!
//! A configuration is a TOML document:
//!
//! ```toml
//! name = "ml1m-gender"
//! seed = 42
//! task = "topn"                 # or "rating"
//!
//! [dataset]
//! preset = "ml1m"               # ml1m | lfm1k | canonical | synthetic | planted
//! ratings = "data/ratings.dat"  # relative to the config file
//! users = "data/users.dat"
//! attribute = "gender"
//!
//! [split]
//! test_frac = 0.2
//! valid_frac = 0.1
//!
//! [metrics]
//! k = 10
//! ks_population = "recommended" # or "test_pairs"
//!
//! [[models]]
//! family = "mf_sgd"
//! grid = { factors = [10, 20], lr = 0.01 }
//!
//! [[mitigations]]
//! kind = "kamishima"
//! models = ["mf_sgd"]           # optional; default is every model
//! grid = { term = "mean_m", eta = [1, 10] }
//! ```
//!
//! Grid values are a scalar or a list; points are the cartesian product in
//! declaration order, with the last key varying fastest.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::synthetic::SyntheticConfig;
use crate::error::{Error, Result};
use crate::metrics::{KsPopulation, Task};
use crate::mitigations::{MitigationKind, MitigationSpec};
use crate::models::{ModelFamily, ModelSpec, ParamValue};

/// One grid axis: a single value or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValues {
    Many(Vec<ParamValue>),
    One(ParamValue),
}

impl GridValues {
    pub fn values(&self) -> &[ParamValue] {
        match self {
            GridValues::Many(v) => v,
            GridValues::One(v) => std::slice::from_ref(v),
        }
    }
}

pub type Grid = IndexMap<String, GridValues>;

/// Cartesian product of the grid axes, last axis fastest. An empty grid has
/// one point with no parameters.
pub fn expand_grid(grid: &Grid) -> Vec<Vec<(String, ParamValue)>> {
    let mut points: Vec<Vec<(String, ParamValue)>> = vec![Vec::new()];
    for (key, values) in grid {
        let mut next = Vec::with_capacity(points.len() * values.values().len());
        for p in &points {
            for v in values.values() {
                let mut q = p.clone();
                q.push((key.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub preset: String,
    #[serde(default)]
    pub ratings: Option<PathBuf>,
    #[serde(default)]
    pub users: Option<PathBuf>,
    pub attribute: String,
    /// Drop users with fewer interactions (0 keeps everyone).
    #[serde(default)]
    pub min_interactions: usize,
    /// Minimum distinct artists per user for play-event data.
    #[serde(default = "default_min_items")]
    pub min_items: usize,
    /// Exclusive age bounds for play-event data.
    #[serde(default = "default_age_bounds")]
    pub age_bounds: [i64; 2],
    #[serde(default = "default_scale")]
    pub scale: [f64; 2],
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
}

fn default_min_items() -> usize {
    20
}

fn default_age_bounds() -> [i64; 2] {
    [0, 125]
}

fn default_scale() -> [f64; 2] {
    [1.0, 5.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_test_frac")]
    pub test_frac: f64,
    #[serde(default = "default_valid_frac")]
    pub valid_frac: f64,
    /// Defaults to the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_test_frac() -> f64 {
    0.2
}

fn default_valid_frac() -> f64 {
    0.1
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_frac: default_test_frac(),
            valid_frac: default_valid_frac(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub ks_population: KsPopulation,
}

fn default_k() -> usize {
    10
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            ks_population: KsPopulation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub family: ModelFamily,
    /// Defaults to the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationEntry {
    pub kind: MitigationKind,
    /// Target families; every configured model when absent.
    #[serde(default)]
    pub models: Option<Vec<ModelFamily>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    pub task: Task,
    /// Where `run` copies the report; relative to the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub mitigations: Vec<MitigationEntry>,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    /// Parses and validates a configuration; relative paths are resolved
    /// against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("cannot parse configuration: {e}")))?;
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base_dir.join(&*path);
                }
            }
        };
        resolve(&mut cfg.dataset.ratings);
        resolve(&mut cfg.dataset.users);
        resolve(&mut cfg.output);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.seed)
    }

    /// Every grid point of model entry `m`.
    pub fn model_points(&self, m: usize) -> Result<Vec<ModelSpec>> {
        let entry = &self.models[m];
        expand_grid(&entry.grid)
            .into_iter()
            .map(|point| {
                let mut spec = ModelSpec::new(entry.family).seeded(entry.seed.unwrap_or(self.seed));
                for (k, v) in point {
                    spec = spec.with(&k, v);
                }
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    /// Every grid point of mitigation entry `x`.
    pub fn mitigation_points(&self, x: usize) -> Result<Vec<MitigationSpec>> {
        let entry = &self.mitigations[x];
        expand_grid(&entry.grid)
            .into_iter()
            .map(|point| {
                let mut spec = MitigationSpec::new(entry.kind).seeded(entry.seed.unwrap_or(self.seed));
                for (k, v) in point {
                    spec = spec.with(&k, v);
                }
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    /// Indices of the model entries mitigation entry `x` applies to.
    pub fn targets(&self, x: usize) -> Vec<usize> {
        let entry = &self.mitigations[x];
        (0..self.models.len())
            .filter(|&m| entry.models.as_ref().is_none_or(|fams| fams.contains(&self.models[m].family)))
            .collect()
    }

    /// Checks grids, fractions, paths and the compatibility matrix.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.models.is_empty() {
            return bad("at least one [[models]] entry is required".into());
        }
        if self.metrics.k == 0 {
            return bad("metrics.k must be at least 1".into());
        }
        if self.dataset.attribute.is_empty() {
            return bad("dataset.attribute must be set".into());
        }
        let needs_files = match self.dataset.preset.as_str() {
            "ml1m" | "lfm1k" | "canonical" => true,
            "synthetic" | "planted" => false,
            other => return bad(format!("unknown dataset preset {other:?}")),
        };
        if needs_files && (self.dataset.ratings.is_none() || self.dataset.users.is_none()) {
            return bad(format!("preset {} needs dataset.ratings and dataset.users", self.dataset.preset));
        }
        let [lo, hi] = self.dataset.scale;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("dataset.scale must be [lo, hi] with lo < hi".into());
        }
        let (t, v) = (self.split.test_frac, self.split.valid_frac);
        if !(0.0..1.0).contains(&t) || !(0.0..1.0).contains(&v) || t + (1.0 - t) * v >= 1.0 {
            return bad(format!("split fractions leave no training data: test {t}, validation {v}"));
        }
        if t == 0.0 {
            return bad("split.test_frac must be positive".into());
        }
        let empty_axis = |grid: &Grid| grid.iter().find(|(_, vals)| vals.values().is_empty()).map(|(k, _)| k.clone());
        let mut searched = false;
        for (m, entry) in self.models.iter().enumerate() {
            if let Some(k) = empty_axis(&entry.grid) {
                return bad(format!("model {}: grid axis {k} is empty", entry.family));
            }
            searched |= self.model_points(m)?.len() > 1;
        }
        for (x, entry) in self.mitigations.iter().enumerate() {
            if let Some(k) = empty_axis(&entry.grid) {
                return bad(format!("mitigation {}: grid axis {k} is empty", entry.kind));
            }
            let points = self.mitigation_points(x)?;
            searched |= points.len() > 1;
            if let Some(fams) = &entry.models {
                for f in fams {
                    if !self.models.iter().any(|m| m.family == *f) {
                        return bad(format!("mitigation {} targets {f}, which is not configured", entry.kind));
                    }
                }
            }
            let targets = self.targets(x);
            if targets.is_empty() {
                return bad(format!("mitigation {} has no target model", entry.kind));
            }
            for m in targets {
                for p in &points {
                    p.validate_for(self.models[m].family, self.task)?;
                }
            }
        }
        if searched && v == 0.0 {
            return bad("grid search needs a validation split (split.valid_frac > 0)".into());
        }
        Ok(())
    }

    /// Normalized JSON form; the output directory is excluded.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_string(&c).expect("serializable")
    }

    /// SHA-256 over the normalized configuration and the input file bytes.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.canonical_json());
        for path in [&self.dataset.ratings, &self.dataset.users].into_iter().flatten() {
            h.update(super::cache::file_digest(path)?);
        }
        Ok(hex::encode(h.finalize()))
    }
}
