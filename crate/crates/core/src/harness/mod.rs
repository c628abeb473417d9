//! Experiment orchestration: configuration, grid search, the end-to-end
//! pipeline with its artifact cache, and report emission.

pub mod cache;
pub mod config;
pub mod grid;
pub mod report;
pub mod run;

pub use cache::{hash_key, Cache, CACHE_ENV};
pub use config::{expand_grid, DatasetConfig, ExperimentConfig, GridValues, MetricConfig, MitigationEntry, ModelEntry, SplitConfig};
pub use grid::{grid_search, GridOutcome, TraceEntry};
pub use report::{CellMetrics, MetricReport, ReportFormat, ReportRow};
pub use run::{
    evaluate, export_run, fit_mitigated, load_dataset, predictions, prepare_data, prepare_split, run_experiment, run_stages, utility,
    EvalSettings, PreparedData, Predictions, RunOutcome, StageOutput, Until,
};
