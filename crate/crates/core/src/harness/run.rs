//! End-to-end experiment pipeline:
//! load → preprocess → split → grid search → Base → mitigations → report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use super::cache::{file_digest, hash_key, Cache};
use super::config::{DatasetConfig, ExperimentConfig};
use super::grid::{grid_search, write_trace};
use super::report::{CellMetrics, MetricReport, ReportFormat, ReportRow};
use crate::data::synthetic::{generate, SyntheticConfig};
use crate::data::{
    aggregate_and_normalize_events, binarize_attribute, filter_min_interactions, load_interactions, load_lfm_events,
    AttributeFormat, AttributeTable, FormatSpec, GroupAssignment, InteractionSet, RatingScale,
};
use crate::error::{Error, Result};
use crate::metrics::{
    demographic_parity, ks_samples_pairs, ks_samples_recommended, ks_two_sample, ndcg_at_k, rmse, KsPopulation,
    PerUserUtility, Task,
};
use crate::mitigations::{
    adjust_ratings, adjust_topn, antidote_augment, apply_slim_balance, fit_pmf_independent, rerank_fair,
    resample_balanced, AdjustMode, AntidoteSettings, BalanceBy, IndependenceTerm, MitigationKind, MitigationSpec, Stage,
};
use crate::models::{fit, load_model, predict_set, recommend_topn, save_model, FittedModel, ModelFamily, ModelSpec, ScoreTable, TopNLists};
use crate::par;
use crate::splitting::{split_per_user, SplitBundle};

/// Decisions in effect, recorded in every report.
pub const DECISIONS: [(&str, &str); 9] = [
    ("decision.binarize_tie", "lower_cut"),
    ("decision.lfm_normalization", "global_minmax_after_filter"),
    ("decision.split_rounding", "half_away_from_zero"),
    ("decision.grid_selection", "validation_utility_only"),
    ("decision.topn_candidates", "unseen_in_original_train"),
    ("decision.mann_whitney_exact", "enumeration_when_n0_n1_le_400"),
    ("decision.rerank_utility", "predicted_score"),
    ("decision.parity_direction", "group1_toward_group0"),
    ("decision.rating_utility", "overall_rmse_dp_on_per_user_rmse"),
];

/// Preprocessed interactions and protected groups.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub set: InteractionSet,
    pub groups: GroupAssignment,
    pub key: String,
}

/// Reads the dataset described by `cfg` (no caching, no binarization).
pub fn load_dataset(cfg: &DatasetConfig) -> Result<(InteractionSet, AttributeTable)> {
    let scale = RatingScale::new(cfg.scale[0], cfg.scale[1])?;
    let path = |p: &Option<PathBuf>, what: &str| {
        p.clone().ok_or_else(|| Error::Config(format!("dataset.{what} is required for preset {}", cfg.preset)))
    };
    let (set, attrs) = match cfg.preset.as_str() {
        "ml1m" => (
            load_interactions(&path(&cfg.ratings, "ratings")?, &FormatSpec::ml1m(), scale)?,
            AttributeTable::load(&path(&cfg.users, "users")?, &AttributeFormat::ml1m())?,
        ),
        "lfm1k" => {
            let events = load_lfm_events(&path(&cfg.ratings, "ratings")?)?;
            let attrs = AttributeTable::load(&path(&cfg.users, "users")?, &AttributeFormat::lfm1k())?;
            let out = aggregate_and_normalize_events(&events, &attrs, cfg.min_items, (cfg.age_bounds[0], cfg.age_bounds[1]))?;
            (out.interactions, out.attributes)
        }
        "canonical" => (
            InteractionSet::read_canonical(&path(&cfg.ratings, "ratings")?, scale)?,
            AttributeTable::read_canonical(&path(&cfg.users, "users")?)?,
        ),
        "synthetic" | "planted" => {
            let fallback = if cfg.preset == "planted" { SyntheticConfig::planted() } else { SyntheticConfig::default() };
            let data = generate(&cfg.synthetic.clone().unwrap_or(fallback))?;
            (data.interactions, data.attributes)
        }
        other => return Err(Error::Config(format!("unknown dataset preset {other:?}"))),
    };
    Ok((filter_min_interactions(&set, cfg.min_interactions)?, attrs))
}

/// Loads, filters and binarizes, reusing the cached result when present.
pub fn prepare_data(cfg: &ExperimentConfig, cache: &Cache) -> Result<PreparedData> {
    let mut parts = vec![serde_json::to_string(&cfg.dataset).expect("serializable")];
    for p in [&cfg.dataset.ratings, &cfg.dataset.users].into_iter().flatten() {
        parts.push(file_digest(p)?);
    }
    let key = hash_key(&parts);
    let scale = RatingScale::new(cfg.dataset.scale[0], cfg.dataset.scale[1])?;
    let (dir, _) = cache.get_or_build("data", &key, |dir| {
        let (set, attrs) = load_dataset(&cfg.dataset)?;
        let groups = binarize_attribute(&attrs, &cfg.dataset.attribute, &set)?;
        groups.validate(Some(&set))?;
        set.write_canonical(&dir.join("interactions.tsv"))?;
        groups.write(&dir.join("groups.tsv"))
    })?;
    Ok(PreparedData {
        set: InteractionSet::read_canonical(&dir.join("interactions.tsv"), scale)?,
        groups: GroupAssignment::read(&dir.join("groups.tsv"))?,
        key,
    })
}

/// Splits the prepared data per user, reusing the cached split when present.
pub fn prepare_split(cfg: &ExperimentConfig, data: &PreparedData, cache: &Cache) -> Result<(SplitBundle, String)> {
    let key = hash_key(&[
        data.key.clone(),
        cfg.split.test_frac.to_string(),
        cfg.split.valid_frac.to_string(),
        cfg.split_seed().to_string(),
    ]);
    let (dir, _) = cache.get_or_build("splits", &key, |dir| {
        let bundle = split_per_user(&data.set, cfg.split.test_frac, cfg.split.valid_frac, cfg.split_seed())?;
        bundle.validate_against(&data.set)?;
        bundle.write(dir)
    })?;
    Ok((SplitBundle::read(&dir, data.set.scale())?, key))
}

/// Evaluation settings shared by every cell of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub task: Task,
    pub k: usize,
    pub ks_population: KsPopulation,
}

impl EvalSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            task: cfg.task,
            k: cfg.metrics.k,
            ks_population: cfg.metrics.ks_population,
        }
    }

    fn higher_is_better(&self) -> bool {
        self.task == Task::Topn
    }
}

/// Model outputs on an evaluation set: top-k lists (top-n task) and scores
/// of the evaluation pairs (rating task, or KS over test pairs).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub lists: Option<TopNLists>,
    pub scores: Option<ScoreTable>,
}

impl Predictions {
    pub fn write(&self, dir: &Path) -> Result<()> {
        if let Some(l) = &self.lists {
            l.write(&dir.join("recs.tsv"))?;
        }
        if let Some(s) = &self.scores {
            s.write(&dir.join("scores.tsv"))?;
        }
        Ok(())
    }
}

/// Outputs of `model` for `target`, with an optional post-processing
/// mitigation. Candidates exclude items of the original `train`.
pub fn predictions(
    model: &FittedModel,
    post: Option<&MitigationSpec>,
    train: &InteractionSet,
    groups: &GroupAssignment,
    target: &InteractionSet,
    s: EvalSettings,
) -> Result<Predictions> {
    let kind = post.map(|p| p.kind);
    let mode = match post {
        Some(p) if p.kind == MitigationKind::AshokanAdjust => Some(AdjustMode::parse(p.text("mode", "value"))?),
        _ => None,
    };
    let mut scores = None;
    if s.task == Task::Rating || s.ks_population == KsPopulation::TestPairs {
        let raw = predict_set(model, target);
        scores = Some(match mode {
            Some(m) => adjust_ratings(&raw, model, train, groups, m)?,
            None => raw,
        });
    }
    let mut lists = None;
    if s.task == Task::Topn {
        lists = Some(match (kind, mode) {
            (Some(MitigationKind::LiRerank), _) => {
                let p = post.expect("post mitigation");
                let pool = p.num("pool", (5 * s.k) as f64).round() as usize;
                if pool < s.k {
                    return Err(Error::Config(format!("li_rerank pool {pool} is smaller than k = {}", s.k)));
                }
                let base = recommend_topn(model, train, pool);
                let gap = rerank_fair(&base, groups, s.k, f64::INFINITY)?.base_gap;
                rerank_fair(&base, groups, s.k, p.rerank_epsilon(gap))?.lists
            }
            (_, Some(m)) => adjust_topn(&recommend_topn(model, train, s.k), model, train, groups, m)?,
            _ => recommend_topn(model, train, s.k),
        });
    } else if kind == Some(MitigationKind::LiRerank) {
        return Err(Error::Incompatible("li_rerank applies to the top-n task only".into()));
    }
    Ok(Predictions { lists, scores })
}

/// Per-user utility and its summary (mean NDCG, or overall RMSE).
pub fn utility(p: &Predictions, target: &InteractionSet, s: EvalSettings) -> Result<(PerUserUtility, f64)> {
    match s.task {
        Task::Topn => {
            let lists = p.lists.as_ref().ok_or_else(|| Error::invalid("top-n evaluation needs recommendation lists"))?;
            let u = ndcg_at_k(lists, target, s.k)?;
            let mean = u.mean();
            Ok((u, mean))
        }
        Task::Rating => rmse(p.scores.as_ref().ok_or_else(|| Error::invalid("rating evaluation needs scores"))?, target),
    }
}

/// Utility, DP (Mann-Whitney) and KS for one configuration.
pub fn evaluate(p: &Predictions, target: &InteractionSet, groups: &GroupAssignment, s: EvalSettings) -> Result<(CellMetrics, PerUserUtility)> {
    let (per_user, summary) = utility(p, target, s)?;
    let dp = demographic_parity(&per_user, groups)?;
    let samples = match (s.task, s.ks_population, &p.lists) {
        (Task::Topn, KsPopulation::Recommended, Some(l)) => ks_samples_recommended(l, groups),
        _ => ks_samples_pairs(p.scores.as_ref().ok_or_else(|| Error::invalid("KS needs pair scores"))?, target, groups)?,
    };
    let ks = ks_two_sample(&samples[0], &samples[1])?;
    let users = per_user.values.keys().filter(|u| groups.group_of(u).is_some()).count();
    Ok((
        CellMetrics {
            utility: summary,
            dp: dp.dp,
            dp_p: dp.p,
            ks: ks.d,
            ks_p: ks.p,
            users,
        },
        per_user,
    ))
}

/// Trains `base` under a pre- or in-processing mitigation. Returns the model
/// and, for pre-processing, the modified training set.
pub fn fit_mitigated(
    base: &ModelSpec,
    mit: &MitigationSpec,
    train: &InteractionSet,
    groups: &GroupAssignment,
) -> Result<(FittedModel, Option<InteractionSet>)> {
    match mit.kind {
        MitigationKind::Resample => {
            let by = BalanceBy::parse(mit.text("by", "interactions"))?;
            let t = resample_balanced(train, groups, by, mit.seed)?;
            Ok((fit(base, &t)?, Some(t)))
        }
        MitigationKind::Antidote => {
            let real = train.users().count();
            let default_budget = ((real as f64) * 0.01).round().max(1.0);
            let settings = AntidoteSettings {
                budget: mit.num("budget", default_budget).round() as usize,
                step: mit.num("step", 1.0),
                iterations: mit.num("iterations", 10.0).round() as usize,
                seed: mit.seed,
            };
            let out = antidote_augment(train, groups, base, settings)?;
            Ok((fit(base, &out.set)?, Some(out.set)))
        }
        MitigationKind::Kamishima => {
            let term = IndependenceTerm::parse(mit.text("term", "mean_m"))?;
            Ok((fit_pmf_independent(train, groups, term, mit.num("eta", 1.0), base)?, None))
        }
        MitigationKind::SlimBalance => Ok((apply_slim_balance(train, groups, mit.num("lambda_bal", 1.0), base)?, None)),
        MitigationKind::LiRerank | MitigationKind::AshokanAdjust => Ok((fit(base, train)?, None)),
    }
}

/// Dense neighbour tables make KNN checkpoints large and refits are cheap.
fn worth_caching(family: ModelFamily) -> bool {
    !matches!(family, ModelFamily::UserKnn | ModelFamily::ItemKnn)
}

/// Fits (or loads) the model for `spec` under an optional pre/in mitigation.
fn cached_fit(
    cache: &Cache,
    split_key: &str,
    spec: &ModelSpec,
    mit: Option<&MitigationSpec>,
    train: &InteractionSet,
    groups: &GroupAssignment,
) -> Result<FittedModel> {
    let build = || match mit {
        Some(m) => fit_mitigated(spec, m, train, groups),
        None => Ok((fit(spec, train)?, None)),
    };
    if !worth_caching(spec.family) {
        return build().map(|r| r.0);
    }
    let key = hash_key(&[
        split_key.to_string(),
        spec.to_string(),
        mit.map(|m| m.to_string()).unwrap_or_default(),
    ]);
    let (dir, _) = cache.get_or_build("models", &key, |dir| {
        let (model, set) = build()?;
        if let Some(set) = set {
            set.write_canonical(&dir.join("train.tsv"))?;
        }
        save_model(&model, &dir.join("model.txt"))
    })?;
    load_model(&dir.join("model.txt"))
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    cache: &'a Cache,
    split: &'a SplitBundle,
    split_key: &'a str,
    groups: &'a GroupAssignment,
    settings: EvalSettings,
    run_dir: &'a Path,
}

impl Context<'_> {
    fn validation_score(&self, p: &Predictions) -> Result<f64> {
        if self.split.validation.is_empty() {
            return Ok(0.0);
        }
        utility(p, &self.split.validation, self.settings).map(|u| u.1)
    }

    fn cell_dir(&self, parts: &[String]) -> Result<PathBuf> {
        let mut dir = self.run_dir.join("cells");
        for p in parts {
            dir.push(p);
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn record(&self, dir: &Path, spec_line: String, p: &Predictions, per_user: &PerUserUtility) -> Result<()> {
        p.write(dir)?;
        per_user.write(&dir.join("utility.tsv"))?;
        let path = dir.join("spec.txt");
        fs::write(&path, spec_line + "\n").map_err(|e| Error::io(&path, e))
    }
}

struct BaseResult {
    spec: ModelSpec,
    model: FittedModel,
    metrics: CellMetrics,
}

fn run_base(ctx: &Context, m: usize) -> Result<BaseResult> {
    let family = ctx.cfg.models[m].family;
    let points = ctx.cfg.model_points(m)?;
    let train = &ctx.split.train;
    let outcome = grid_search(&points, ctx.settings.higher_is_better(), |spec| {
        let model = cached_fit(ctx.cache, ctx.split_key, spec, None, train, ctx.groups)?;
        let score = if points.len() > 1 {
            let p = predictions(&model, None, train, ctx.groups, &ctx.split.validation, ctx.settings)?;
            ctx.validation_score(&p)?
        } else {
            0.0
        };
        Ok((score, model))
    })?;
    let grid_dir = ctx.run_dir.join("grid");
    fs::create_dir_all(&grid_dir).map_err(|e| Error::io(&grid_dir, e))?;
    write_trace(&grid_dir.join(format!("m{m}-{family}.tsv")), &outcome.trace, Some(outcome.best))?;
    let spec = points[outcome.best].clone();
    let model = outcome.value;
    let p = predictions(&model, None, train, ctx.groups, &ctx.split.test, ctx.settings)?;
    let (metrics, per_user) = evaluate(&p, &ctx.split.test, ctx.groups, ctx.settings)?;
    let dir = ctx.cell_dir(&[format!("m{m}-{family}"), "base".into()])?;
    ctx.record(&dir, spec.to_string(), &p, &per_user)?;
    Ok(BaseResult { spec, model, metrics })
}

fn run_cell(ctx: &Context, base: &BaseResult, m: usize, x: usize) -> Result<ReportRow> {
    let kind = ctx.cfg.mitigations[x].kind;
    let family = ctx.cfg.models[m].family;
    let points = ctx.cfg.mitigation_points(x)?;
    let train = &ctx.split.train;
    let post = kind.stage() == Stage::Post;
    let outcome = grid_search(&points, ctx.settings.higher_is_better(), |mit| {
        let model = if post {
            None
        } else {
            Some(cached_fit(ctx.cache, ctx.split_key, &base.spec, Some(mit), train, ctx.groups)?)
        };
        let used = model.as_ref().unwrap_or(&base.model);
        let score = if points.len() > 1 {
            let p = predictions(used, post.then_some(mit), train, ctx.groups, &ctx.split.validation, ctx.settings)?;
            ctx.validation_score(&p)?
        } else {
            0.0
        };
        Ok((score, model))
    })?;
    write_trace(
        &ctx.run_dir.join("grid").join(format!("m{m}-{family}--x{x}-{kind}.tsv")),
        &outcome.trace,
        Some(outcome.best),
    )?;
    let mit = &points[outcome.best];
    let model = outcome.value.as_ref().unwrap_or(&base.model);
    let p = predictions(model, post.then_some(mit), train, ctx.groups, &ctx.split.test, ctx.settings)?;
    let (metrics, per_user) = evaluate(&p, &ctx.split.test, ctx.groups, ctx.settings)?;
    let dir = ctx.cell_dir(&[format!("m{m}-{family}"), format!("x{x}-{kind}")])?;
    ctx.record(&dir, format!("{} | {mit}", base.spec), &p, &per_user)?;
    Ok(ReportRow {
        procedure: kind.label().to_string(),
        model: family.label().to_string(),
        model_spec: base.spec.to_string(),
        mitigation_spec: mit.to_string(),
        base: base.metrics,
        mit: metrics,
    })
}

fn provenance(cfg: &ExperimentConfig, config_hash: &str, data: &PreparedData, split: &SplitBundle, split_key: &str) -> Vec<(String, String)> {
    let shares = data.groups.group_shares();
    let names = &data.groups.group_names;
    let mut out: Vec<(String, String)> = vec![
        ("name".into(), cfg.name.clone()),
        ("config_hash".into(), config_hash.into()),
        ("recfair_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("seed".into(), cfg.seed.to_string()),
        ("dataset".into(), cfg.dataset.preset.clone()),
        ("data_key".into(), data.key.clone()),
        ("users".into(), data.set.n_users().to_string()),
        ("items".into(), data.set.n_items().to_string()),
        ("interactions".into(), data.set.len().to_string()),
        ("attribute".into(), data.groups.attribute.clone()),
        ("group0".into(), format!("{} ({})", names[0], shares[0])),
        ("group1".into(), format!("{} ({})", names[1], shares[1])),
        ("split_key".into(), split_key.into()),
        ("split_seed".into(), split.meta.seed.to_string()),
        ("test_frac".into(), split.meta.test_frac.to_string()),
        ("valid_frac".into(), split.meta.valid_frac.to_string()),
        ("split_strategy".into(), format!("{:?}", split.meta.strategy).to_lowercase()),
        ("k".into(), cfg.metrics.k.to_string()),
        ("ks_population".into(), serde_json::to_value(cfg.metrics.ks_population).unwrap().as_str().unwrap().to_string()),
    ];
    for (k, v) in DECISIONS {
        out.push((k.into(), v.into()));
    }
    if cfg.mitigations.iter().any(|m| m.kind == MitigationKind::Resample) {
        out.push(("decision.resample_balance".into(), "interactions_unless_by_users".into()));
    }
    out
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub run_dir: PathBuf,
    /// True when the run directory already existed and nothing was computed.
    pub cached: bool,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// How far [`run_stages`] carries the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Until {
    /// Grid-searched Base models and their test outputs.
    Train,
    /// Every configured (model, mitigation) cell and the metric report.
    Report,
}

/// What [`run_stages`] produced.
#[derive(Debug, Clone)]
pub struct StageOutput {
    /// Selected Base spec and test metrics per model entry.
    pub bases: Vec<(ModelSpec, CellMetrics)>,
    /// Present when the pipeline ran to the report stage.
    pub report: Option<MetricReport>,
}

fn execute(cfg: &ExperimentConfig, cache: &Cache, config_hash: &str, dir: &Path, until: Until) -> Result<StageOutput> {
    let started = unix_now();
    write_file(&dir.join("config.json"), &(cfg.canonical_json() + "\n"))?;
    let data = prepare_data(cfg, cache).map_err(|e| e.in_stage("prepare"))?;
    let (split, split_key) = prepare_split(cfg, &data, cache).map_err(|e| e.in_stage("split"))?;
    let ctx = Context {
        cfg,
        cache,
        split: &split,
        split_key: &split_key,
        groups: &data.groups,
        settings: EvalSettings::from_config(cfg),
        run_dir: dir,
    };
    let bases = par::try_map_range(cfg.models.len(), |m| {
        run_base(&ctx, m).map_err(|e| e.in_stage(&format!("train {}", cfg.models[m].family)))
    })?;
    let summary = bases.iter().map(|b| (b.spec.clone(), b.metrics)).collect();
    if until == Until::Train {
        for (m, b) in bases.iter().enumerate() {
            if worth_caching(b.spec.family) {
                let cell = ctx.cell_dir(&[format!("m{m}-{}", b.spec.family), "base".into()])?;
                save_model(&b.model, &cell.join("model.txt"))?;
            }
        }
        return Ok(StageOutput { bases: summary, report: None });
    }
    let cells: Vec<(usize, usize)> = (0..cfg.mitigations.len()).flat_map(|x| cfg.targets(x).into_iter().map(move |m| (x, m))).collect();
    let rows = par::try_map_range(cells.len(), |c| {
        let (x, m) = cells[c];
        run_cell(&ctx, &bases[m], m, x)
            .map_err(|e| e.in_stage(&format!("mitigate {} on {}", cfg.mitigations[x].kind, cfg.models[m].family)))
    })?;
    let report = MetricReport {
        task: cfg.task,
        provenance: provenance(cfg, config_hash, &data, &split, &split_key),
        rows,
    };
    report.validate().map_err(|e| e.in_stage("report"))?;
    report.emit(ReportFormat::Csv, &dir.join("report.csv"))?;
    report.emit(ReportFormat::Markdown, &dir.join("report.md"))?;
    let prov = json!({
        "config_hash": config_hash,
        "cache_root": cache.root().display().to_string(),
        "started_unix": started,
        "finished_unix": unix_now(),
        "entries": report.provenance.iter().map(|(k, v)| json!([k, v])).collect::<Vec<_>>(),
    });
    write_file(&dir.join("provenance.json"), &(serde_json::to_string_pretty(&prov).unwrap() + "\n"))?;
    Ok(StageOutput { bases: summary, report: Some(report) })
}

/// Runs the pipeline up to `until`, writing artifacts into `out` (created
/// if missing). Data, splits and model fits still go through `cache`.
pub fn run_stages(cfg: &ExperimentConfig, cache: &Cache, out: &Path, until: Until) -> Result<StageOutput> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    execute(cfg, cache, &cfg.hash()?, out, until)
}

/// Runs (or reloads) the experiment. Completed runs live in
/// `<cache>/runs/<config hash>/` and are returned without recomputation.
pub fn run_experiment(cfg: &ExperimentConfig, cache: &Cache) -> Result<RunOutcome> {
    cfg.validate()?;
    let config_hash = cfg.hash()?;
    let mut fresh = None;
    let (run_dir, cached) = cache.get_or_build("runs", &config_hash, |dir| {
        fresh = execute(cfg, cache, &config_hash, dir, Until::Report)?.report;
        Ok(())
    })?;
    let report = match fresh {
        Some(r) if !cached => r,
        _ => MetricReport::read_csv(&run_dir.join("report.csv"))?,
    };
    Ok(RunOutcome { report, run_dir, cached })
}

/// Copies the report files of a run into `out`.
pub fn export_run(outcome: &RunOutcome, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for name in ["report.csv", "report.md", "provenance.json"] {
        let from = outcome.run_dir.join(name);
        fs::copy(&from, out.join(name)).map_err(|e| Error::io(&from, e))?;
    }
    Ok(())
}
