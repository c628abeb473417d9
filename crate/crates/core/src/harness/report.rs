//! Metric reports: lossless CSV and a paired Base/Mit markdown table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{marker, Task};

/// Utility and fairness of one evaluated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    /// Mean NDCG@k (top-n) or overall RMSE (rating).
    pub utility: f64,
    pub dp: f64,
    pub dp_p: f64,
    pub ks: f64,
    pub ks_p: f64,
    /// Users entering the DP comparison.
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Mitigation procedure label.
    pub procedure: String,
    /// Model label.
    pub model: String,
    pub model_spec: String,
    pub mitigation_spec: String,
    pub base: CellMetrics,
    pub mit: CellMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    /// Ordered `key=value` provenance entries.
    pub provenance: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

const COLUMNS: [&str; 16] = [
    "procedure",
    "model",
    "model_spec",
    "mitigation_spec",
    "base_utility",
    "base_dp",
    "base_dp_p",
    "base_ks",
    "base_ks_p",
    "base_users",
    "mit_utility",
    "mit_dp",
    "mit_dp_p",
    "mit_ks",
    "mit_ks_p",
    "mit_users",
];

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Topn => "topn",
        Task::Rating => "rating",
    }
}

fn cell_fields(c: &CellMetrics) -> [String; 6] {
    [
        c.utility.to_string(),
        c.dp.to_string(),
        c.dp_p.to_string(),
        c.ks.to_string(),
        c.ks_p.to_string(),
        c.users.to_string(),
    ]
}

impl MetricReport {
    /// Rows must pair Base and Mit over the same evaluation population and
    /// carry probabilities in [0, 1].
    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if r.base.users != r.mit.users {
                return Err(Error::invalid(format!(
                    "{} / {}: Base and Mit evaluated {} vs {} users",
                    r.procedure, r.model, r.base.users, r.mit.users
                )));
            }
            for p in [r.base.dp_p, r.base.ks_p, r.mit.dp_p, r.mit.ks_p] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!("{} / {}: p-value {p} outside [0, 1]", r.procedure, r.model)));
                }
            }
        }
        Ok(())
    }

    /// `#`-prefixed provenance lines, then a header and one row per
    /// (procedure, model). Floats use the shortest exact representation.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# task={}\n", task_name(self.task));
        for (k, v) in &self.provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(COLUMNS).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.procedure.clone(), r.model.clone(), r.model_spec.clone(), r.mitigation_spec.clone()];
            rec.extend(cell_fields(&r.base));
            rec.extend(cell_fields(&r.mit));
            w.write_record(&rec).expect("in-memory write");
        }
        out.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory flush")).expect("utf-8"));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, m: String| Error::MalformedRow {
            path: "report.csv".into(),
            line,
            message: m,
        };
        let mut task = None;
        let mut provenance = Vec::new();
        let mut body_start = 0;
        for (n, line) in text.split_inclusive('\n').enumerate() {
            let Some(rest) = line.strip_prefix("# ") else { break };
            let rest = rest.strip_suffix('\n').unwrap_or(rest);
            let (k, v) = rest.split_once('=').ok_or_else(|| bad(n + 1, "expected `# key=value`".into()))?;
            if k == "task" {
                task = Some(match v {
                    "topn" => Task::Topn,
                    "rating" => Task::Rating,
                    _ => return Err(bad(n + 1, format!("unknown task {v:?}"))),
                });
            } else {
                provenance.push((k.to_string(), v.to_string()));
            }
            body_start += line.len();
        }
        let task = task.ok_or_else(|| bad(1, "missing `# task=` line".into()))?;
        let header_line = provenance.len() + 2;
        let mut rdr = csv::ReaderBuilder::new().from_reader(text[body_start..].as_bytes());
        let header = rdr.headers().map_err(|e| bad(header_line, e.to_string()))?;
        if header.iter().ne(COLUMNS) {
            return Err(bad(header_line, "unexpected columns".into()));
        }
        let mut rows = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let line = header_line + n + 1;
            let rec = rec.map_err(|e| bad(line, e.to_string()))?;
            let num = |k: usize| -> Result<f64> { rec[k].parse().map_err(|_| bad(line, format!("bad number {:?}", &rec[k]))) };
            let int = |k: usize| -> Result<usize> { rec[k].parse().map_err(|_| bad(line, format!("bad count {:?}", &rec[k]))) };
            let cell = |o: usize| -> Result<CellMetrics> {
                Ok(CellMetrics {
                    utility: num(o)?,
                    dp: num(o + 1)?,
                    dp_p: num(o + 2)?,
                    ks: num(o + 3)?,
                    ks_p: num(o + 4)?,
                    users: int(o + 5)?,
                })
            };
            rows.push(ReportRow {
                procedure: rec[0].to_string(),
                model: rec[1].to_string(),
                model_spec: rec[2].to_string(),
                mitigation_spec: rec[3].to_string(),
                base: cell(4)?,
                mit: cell(10)?,
            });
        }
        Ok(Self { task, provenance, rows })
    }

    /// Paired Base/Mit columns per metric; DP and KS carry `^` (p < 0.01)
    /// or `*` (p < 0.05) markers. The procedure label is printed on the
    /// first row of each run of equal labels.
    pub fn to_markdown(&self) -> String {
        let u = self.task.utility_name();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| Paper | Model | {u} Base | {u} Mit | DP Base | DP Mit | KS Base | KS Mit |"
        );
        out.push_str("| --- | --- | ---: | ---: | ---: | ---: | ---: | ---: |\n");
        let mut previous: Option<&str> = None;
        for r in &self.rows {
            let label = if previous == Some(r.procedure.as_str()) { "" } else { r.procedure.as_str() };
            previous = Some(&r.procedure);
            let _ = writeln!(
                out,
                "| {label} | {} | {:.3} | {:.3} | {}{:.3} | {}{:.3} | {}{:.3} | {}{:.3} |",
                r.model,
                r.base.utility,
                r.mit.utility,
                marker(r.base.dp_p),
                r.base.dp,
                marker(r.mit.dp_p),
                r.mit.dp,
                marker(r.base.ks_p),
                r.base.ks,
                marker(r.mit.ks_p),
                r.mit.ks,
            );
        }
        out.push_str("\n`^` p < 0.01, `*` p < 0.05 (DP: Mann-Whitney; KS: two-sample Kolmogorov-Smirnov).\n");
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Markdown => self.to_markdown(),
        }
    }

    pub fn emit(&self, format: ReportFormat, path: &Path) -> Result<()> {
        fs::write(path, self.render(format)).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| match e {
            Error::MalformedRow { line, message, .. } => Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn provenance_value(&self, key: &str) -> Option<&str> {
        self.provenance.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}
