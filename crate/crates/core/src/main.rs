use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use recfair::data::synthetic::{generate, ml1m_demographics_table, write_ml1m_users, SyntheticConfig};
use recfair::harness::{
    evaluate, export_run, prepare_data, prepare_split, run_experiment, run_stages, Cache, EvalSettings, ExperimentConfig,
    MetricReport, Predictions, ReportFormat, Until,
};
use recfair::metrics::{KsPopulation, Task};
use recfair::mitigations::compatibility_tsv;
use recfair::par::{self, Execution};
use recfair::{Error, ErrorKind, GroupAssignment, InteractionSet, RatingScale, Result, ScoreTable, TopNLists};

#[derive(Parser)]
#[command(name = "recfair", version, about = "Consumer-fairness benchmark for recommender systems")]
struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Cache root (overrides RECFAIR_CACHE; default `.recfair-cache`).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter, binarize and split the configured dataset.
    Prepare {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Grid-search and train the Base models.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train Base models and every configured mitigation, then score them.
    Mitigate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score recommendation lists or predicted ratings against a test set.
    Evaluate {
        /// Canonical `user\titem\trating` test interactions.
        #[arg(long)]
        test: PathBuf,
        /// `user\tgroup` assignment.
        #[arg(long)]
        groups: PathBuf,
        /// Top-n lists (`user\trank\titem\tscore`).
        #[arg(long, required_unless_present = "scores")]
        recs: Option<PathBuf>,
        /// Predicted scores (`user\titem\tscore`).
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TaskArg::Topn)]
        task: TaskArg,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "1,5")]
        scale: String,
    },
    /// Render a report CSV as markdown or CSV.
    Report {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long, default_value = "markdown")]
        format: String,
        /// Write here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the whole pipeline (cached by configuration hash).
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Copy report.csv, report.md and provenance.json here (defaults to
        /// the configuration's `output`).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write a generated dataset in MovieLens 1M format.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Use the planted-bias defaults.
        #[arg(long)]
        planted: bool,
        /// Round ratings to whole stars.
        #[arg(long)]
        integer: bool,
        /// Only write users.dat with the full MovieLens 1M gender/age counts.
        #[arg(long)]
        demographics: bool,
    },
    /// Print the mitigation / model / task compatibility matrix.
    Compat,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Topn,
    Rating,
}

fn cache(cli_root: &Option<PathBuf>) -> Cache {
    match cli_root {
        Some(root) => Cache::new(root),
        None => Cache::from_env(".recfair-cache"),
    }
}

fn print_bases(bases: &[(recfair::ModelSpec, recfair::harness::CellMetrics)]) {
    println!("model\tutility\tdp\tdp_p\tks\tks_p");
    for (spec, m) in bases {
        println!("{spec}\t{}\t{}\t{}\t{}\t{}", m.utility, m.dp, m.dp_p, m.ks, m.ks_p);
    }
}

fn parse_scale(s: &str) -> Result<RatingScale> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| Error::Config(format!("scale must be `lo,hi`, got {s:?}")))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad scale bound {v:?}")));
    RatingScale::new(num(lo)?, num(hi)?)
}

fn write_or_print(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let cache = cache(&cli.cache);
    match cli.command {
        Command::Prepare { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let data = prepare_data(&cfg, &cache).map_err(|e| e.in_stage("prepare"))?;
            let (split, key) = prepare_split(&cfg, &data, &cache).map_err(|e| e.in_stage("split"))?;
            let shares = data.groups.group_shares();
            println!("data\t{}", cache.dir("data", &data.key).display());
            println!("split\t{}", cache.dir("splits", &key).display());
            println!("users\t{}\nitems\t{}\ninteractions\t{}", data.set.n_users(), data.set.n_items(), data.set.len());
            for g in 0..2 {
                println!("group{g}\t{}\t{:.4}", data.groups.group_names[g], shares[g]);
            }
            println!("train\t{}\nvalidation\t{}\ntest\t{}", split.train.len(), split.validation.len(), split.test.len());
        }
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            print_bases(&run_stages(&cfg, &cache, &out, Until::Train)?.bases);
        }
        Command::Mitigate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = run_stages(&cfg, &cache, &out, Until::Report)?;
            print!("{}", s.report.expect("report stage").to_markdown());
        }
        Command::Evaluate {
            test,
            groups,
            recs,
            scores,
            task,
            k,
            scale,
        } => {
            let target = InteractionSet::read_canonical(&test, parse_scale(&scale)?)?;
            let groups = GroupAssignment::read(&groups)?;
            let p = Predictions {
                lists: recs.as_deref().map(TopNLists::read).transpose()?,
                scores: scores.as_deref().map(ScoreTable::read).transpose()?,
            };
            let s = EvalSettings {
                task: match task {
                    TaskArg::Topn => Task::Topn,
                    TaskArg::Rating => Task::Rating,
                },
                k,
                ks_population: if p.lists.is_some() { KsPopulation::Recommended } else { KsPopulation::TestPairs },
            };
            let (m, _) = evaluate(&p, &target, &groups, s)?;
            println!("metric\tvalue\tp\tmarker");
            println!("{}\t{}\t\t", s.task.utility_name(), m.utility);
            println!("dp\t{}\t{}\t{}", m.dp, m.dp_p, recfair::metrics::marker(m.dp_p));
            println!("ks\t{}\t{}\t{}", m.ks, m.ks_p, recfair::metrics::marker(m.ks_p));
        }
        Command::Report { input, format, output } => {
            let format: ReportFormat = format.parse()?;
            let report = MetricReport::read_csv(&input)?;
            write_or_print(&report.render(format), output.as_deref())?;
        }
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let outcome = run_experiment(&cfg, &cache)?;
            if let Some(dest) = out.or_else(|| cfg.output.clone()) {
                export_run(&outcome, &dest)?;
            }
            log::info!("run directory {} (cached: {})", outcome.run_dir.display(), outcome.cached);
            print!("{}", outcome.report.to_markdown());
        }
        Command::Synth {
            out,
            users,
            items,
            seed,
            planted,
            integer,
            demographics,
        } => {
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            if demographics {
                write_ml1m_users(&ml1m_demographics_table(), &out.join("users.dat"))?;
            } else {
                let base = if planted { SyntheticConfig::planted() } else { SyntheticConfig::default() };
                let cfg = SyntheticConfig {
                    n_users: users,
                    n_items: items,
                    min_per_user: base.min_per_user.min(items),
                    max_per_user: base.max_per_user.min(items),
                    seed,
                    integer_ratings: integer,
                    ..base
                };
                generate(&cfg)?.write_ml1m(&out)?;
            }
        }
        Command::Compat => print!("{}", compatibility_tsv()),
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Training => 4,
        ErrorKind::Other => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.sequential {
        par::set_execution(Execution::Sequential);
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                source = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
