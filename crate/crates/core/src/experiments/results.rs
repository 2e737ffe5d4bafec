//! Long-format result tables: one row per replicate (per grid point), and
//! per-metric summaries with standard errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use super::replicate::ReplicateResult;
use crate::error::{Result, SimError};
use crate::metrics::MetricReport;

/// Frame prefixes used in column names.
pub const FRAMES: [&str; 3] = ["overall", "targeted", "nontargeted"];

const SCALAR_COLUMNS: [&str; 15] = [
    "n_raters",
    "n_notes",
    "n_ratings",
    "raters_plus",
    "notes_plus",
    "n_bad",
    "phi",
    "nominal_eh",
    "realized_eh",
    "rating_mix_h",
    "rating_mix_sh",
    "rating_mix_nh",
    "n_removed",
    "fit_epochs",
    "fit_converged",
];

/// Numeric columns in output order.
pub fn value_columns() -> Vec<String> {
    let mut cols: Vec<String> = SCALAR_COLUMNS.iter().map(|s| s.to_string()).collect();
    for frame in FRAMES {
        cols.extend(MetricReport::FIELDS.iter().map(|f| format!("{frame}_{f}")));
    }
    cols
}

/// A result row stripped to strings and numbers, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatRow {
    pub scenario: String,
    pub replicate: usize,
    pub seed: u64,
    pub point: Vec<(String, String)>,
    pub error: Option<String>,
    pub values: Vec<Option<f64>>,
}

impl ReplicateResult {
    pub fn flat(&self) -> FlatRow {
        let values = match &self.outcome {
            Err(_) => vec![None; value_columns().len()],
            Ok(m) => {
                let mut v = vec![
                    Some(m.n_raters as f64),
                    Some(m.n_notes as f64),
                    Some(m.n_ratings as f64),
                    Some(m.raters_plus as f64),
                    Some(m.notes_plus as f64),
                    Some(m.n_bad as f64),
                    Some(f64::from(m.phi)),
                    Some(m.nominal_ingroup_bias),
                    m.realized_ingroup_bias,
                    Some(m.rating_mix[0]),
                    Some(m.rating_mix[1]),
                    Some(m.rating_mix[2]),
                    Some(m.n_removed as f64),
                    Some(m.fit_epochs as f64),
                    Some(if m.fit_converged { 1.0 } else { 0.0 }),
                ];
                for frame in [&m.overall, &m.targeted, &m.non_targeted] {
                    v.extend(frame.values());
                }
                v
            }
        };
        FlatRow {
            scenario: self.scenario.clone(),
            replicate: self.replicate,
            seed: self.seed,
            point: self.point.clone(),
            error: self.outcome.as_ref().err().cloned(),
            values,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn results_header(axes: &[String]) -> Vec<String> {
    let mut h = vec!["scenario".to_string(), "replicate".into(), "seed".into()];
    h.extend(axes.iter().cloned());
    h.push("status".into());
    h.push("error".into());
    h.extend(value_columns());
    h
}

pub fn result_record(r: &FlatRow) -> Vec<String> {
    let mut rec = vec![r.scenario.clone(), r.replicate.to_string(), r.seed.to_string()];
    rec.extend(r.point.iter().map(|(_, v)| v.clone()));
    rec.push(if r.error.is_some() { "error" } else { "ok" }.into());
    rec.push(r.error.clone().unwrap_or_default());
    rec.extend(r.values.iter().map(|v| cell(*v)));
    rec
}

/// Appends result rows to `path`, writing the header only when the file is
/// new or empty.
pub struct ResultsWriter {
    inner: csv::Writer<File>,
}

impl ResultsWriter {
    pub fn append(path: &Path, axes: &[String]) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| SimError::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        if fresh {
            inner.write_record(results_header(axes))?;
            inner.flush().map_err(|e| SimError::io(path, e))?;
        }
        Ok(ResultsWriter { inner })
    }

    pub fn write(&mut self, r: &FlatRow) -> Result<()> {
        self.inner.write_record(result_record(r))?;
        self.inner.flush().map_err(|e| SimError::io("results", e))
    }
}

/// Reads a results table written by [`ResultsWriter`].
pub fn read_results(path: &Path) -> Result<Vec<FlatRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::io(path, io),
        other => SimError::Data(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let status_at = header
        .iter()
        .position(|h| h == "status")
        .ok_or_else(|| SimError::Format {
            path: path.into(),
            line: 1,
            msg: "missing `status` column".into(),
        })?;
    let axes = &header[3..status_at];
    let n_values = header.len() - status_at - 2;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |msg: String| SimError::Format {
            path: path.into(),
            line: k as u64 + 2,
            msg,
        };
        let num = |i: usize| -> Result<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("not a number: `{s}`")))
            }
        };
        rows.push(FlatRow {
            scenario: rec[0].to_string(),
            replicate: rec[1].parse().map_err(|_| bad("bad replicate".into()))?,
            seed: rec[2].parse().map_err(|_| bad("bad seed".into()))?,
            point: axes
                .iter()
                .enumerate()
                .map(|(i, a)| (a.clone(), rec[3 + i].to_string()))
                .collect(),
            error: (&rec[status_at] == "error").then(|| rec[status_at + 1].to_string()),
            values: (0..n_values).map(|i| num(status_at + 2 + i)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// Mean and standard error of one column at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub point: Vec<(String, String)>,
    pub metric: String,
    /// `None` when no replicate had a defined value.
    pub mean: Option<f64>,
    /// Sample standard deviation over `sqrt(k)`; 0 when `k == 1`.
    pub stderr: Option<f64>,
    pub k: usize,
    pub n_undefined: usize,
    pub n_failed: usize,
}

/// Mean and standard error over the defined values, with the count of
/// undefined ones.
pub fn mean_stderr(values: &[Option<f64>]) -> (Option<f64>, Option<f64>, usize) {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let k = defined.len();
    if k == 0 {
        return (None, None, 0);
    }
    let mean = defined.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (Some(mean), Some(0.0), 1);
    }
    let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (Some(mean), Some(var.sqrt() / (k as f64).sqrt()), k)
}

/// Summaries per (scenario, point, column), in first-seen point order.
pub fn aggregate_rows(rows: &[FlatRow]) -> Vec<SummaryRow> {
    let cols = value_columns();
    let mut groups: BTreeMap<usize, (&FlatRow, Vec<&FlatRow>)> = BTreeMap::new();
    let mut order: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for r in rows {
        let key = (r.scenario.clone(), r.point.clone());
        let idx = order.iter().position(|k| *k == key).unwrap_or_else(|| {
            order.push(key);
            order.len() - 1
        });
        groups.entry(idx).or_insert_with(|| (r, Vec::new())).1.push(r);
    }
    let mut out = Vec::new();
    for (_, (first, members)) in groups {
        let ok: Vec<&&FlatRow> = members.iter().filter(|r| r.error.is_none()).collect();
        let n_failed = members.len() - ok.len();
        for (c, name) in cols.iter().enumerate() {
            let vals: Vec<Option<f64>> = ok.iter().map(|r| r.values.get(c).copied().flatten()).collect();
            let (mean, stderr, k) = mean_stderr(&vals);
            out.push(SummaryRow {
                scenario: first.scenario.clone(),
                point: first.point.clone(),
                metric: name.clone(),
                mean,
                stderr,
                k,
                n_undefined: vals.len() - k,
                n_failed,
            });
        }
    }
    out
}

/// Per-metric mean and standard error over replicate results.
pub fn aggregate(results: &[ReplicateResult]) -> Vec<SummaryRow> {
    let rows: Vec<FlatRow> = results.iter().map(|r| r.flat()).collect();
    aggregate_rows(&rows)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::io(path, io),
        other => SimError::Data(format!("{other:?}")),
    })?;
    let axes: Vec<String> = rows
        .first()
        .map(|r| r.point.iter().map(|(a, _)| a.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["scenario".to_string()];
    header.extend(axes);
    header.extend(["metric", "mean", "stderr", "k", "n_undefined", "n_failed"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.scenario.clone()];
        rec.extend(r.point.iter().map(|(_, v)| v.clone()));
        rec.extend([
            r.metric.clone(),
            cell(r.mean),
            cell(r.stderr),
            r.k.to_string(),
            r.n_undefined.to_string(),
            r.n_failed.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

/// Looks up a summary value.
pub fn summary_mean(rows: &[SummaryRow], metric: &str) -> Option<f64> {
    rows.iter().find(|r| r.metric == metric).and_then(|r| r.mean)
}
