//! Validation-driven grid search.

use std::fmt::{Display, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub index: usize,
    pub point: String,
    /// Validation score; `None` when the point failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct GridOutcome<T> {
    /// Index of the selected grid point.
    pub best: usize,
    pub score: f64,
    /// Whatever the evaluator produced for the selected point.
    pub value: T,
    pub trace: Vec<TraceEntry>,
}

/// Evaluates every point (possibly in parallel) and picks the best score.
///
/// Ties go to the first declared point. Points whose evaluation fails or
/// yields a non-finite score are recorded in the trace and skipped; if every
/// point fails, the first failure is returned.
pub fn grid_search<P, T, F>(points: &[P], higher_is_better: bool, eval: F) -> Result<GridOutcome<T>>
where
    P: Display + Sync,
    T: Send,
    F: Fn(&P) -> Result<(f64, T)> + Sync + Send,
{
    if points.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let results = par::map_slice(points, |p| {
        eval(p).and_then(|(s, v)| {
            if s.is_finite() {
                Ok((s, v))
            } else {
                Err(Error::NonFinite(format!("validation score {s}")))
            }
        })
    });
    let mut trace = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64, T)> = None;
    let mut first_error = None;
    for (index, (p, r)) in points.iter().zip(results).enumerate() {
        match r {
            Ok((score, value)) => {
                trace.push(TraceEntry {
                    index,
                    point: p.to_string(),
                    score: Some(score),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, b, _)) if higher_is_better => score > *b,
                    Some((_, b, _)) => score < *b,
                };
                if better {
                    best = Some((index, score, value));
                }
            }
            Err(e) => {
                trace.push(TraceEntry {
                    index,
                    point: p.to_string(),
                    score: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    match best {
        Some((best, score, value)) => Ok(GridOutcome { best, score, value, trace }),
        None => Err(first_error.expect("non-empty grid").in_stage("grid search")),
    }
}

/// Trace as tab-separated `index, point, score, status` rows.
pub fn trace_to_tsv(trace: &[TraceEntry], best: Option<usize>) -> String {
    let mut out = String::from("index\tpoint\tscore\tstatus\n");
    for t in trace {
        let score = t.score.map(|s| s.to_string()).unwrap_or_default();
        let status = match (&t.error, best == Some(t.index)) {
            (Some(e), _) => format!("failed: {}", e.replace(['\t', '\n'], " ")),
            (None, true) => "selected".to_string(),
            (None, false) => "ok".to_string(),
        };
        let _ = writeln!(out, "{}\t{}\t{score}\t{status}", t.index, t.point);
    }
    out
}

pub fn write_trace(path: &Path, trace: &[TraceEntry], best: Option<usize>) -> Result<()> {
    fs::write(path, trace_to_tsv(trace, best)).map_err(|e| Error::io(path, e))
}
