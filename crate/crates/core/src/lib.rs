//! Consumer-fairness benchmark toolkit for recommender systems.
//!
//! The crate is organised along the evaluation pipeline:
//!
//! - [`data`]: ingestion, preprocessing and sensitive-attribute binarization
//! - [`splitting`]: per-user train/validation/test partitions
//! - [`models`]: classical recommenders (popularity, KNN, MF, ALS, SLIM-U)
//! - [`mitigations`]: pre-, in- and post-processing unfairness mitigations
//! - [`metrics`]: utility (NDCG, RMSE) and fairness (DP, KS, GLV) measures
//! - [`harness`]: configuration, grid search, experiment runs and reports
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod mitigations;
pub mod models;
pub mod par;
pub mod splitting;

pub use data::{AttributeTable, GroupAssignment, Interaction, InteractionSet, RatingScale};
pub use error::{Error, ErrorKind, Result};
pub use models::{FittedModel, ModelFamily, ModelSpec, ScoreTable, Scorer, TopNLists};
pub use splitting::SplitBundle;
