//! Critical fraction of bad raters at which a targeted-frame metric first
//! reaches a level.

use std::path::Path;

use rayon::prelude::*;

use super::config::{ScenarioConfig, ThresholdConfig};
use super::replicate::{run_prepared, Prepared, ReplicateResult};
use super::results::mean_stderr;
use super::sweep::{build_pool, grid_points};
use crate::error::{Result, SimError};

/// Mean targeted metric at one scanned fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanStep {
    pub fraction: f64,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub k: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub point: Vec<(String, String)>,
    /// First scanned fraction whose mean reaches the level; `None` if the
    /// level is never reached up to `max_fraction`.
    pub threshold: Option<f64>,
    /// Last fraction below the level and the first at or above it.
    pub bracket: (Option<f64>, Option<f64>),
    pub scan: Vec<ScanStep>,
}

/// Fractions `min + k * resolution` up to `max`, built from integer steps.
pub fn scan_fractions(t: &ThresholdConfig) -> Vec<f64> {
    let steps = ((t.max_fraction - t.min_fraction) / t.resolution + 1e-9).floor() as usize;
    (0..=steps)
        .map(|k| (t.min_fraction + k as f64 * t.resolution).min(t.max_fraction))
        .collect()
}

/// Scans `adversary.fraction_bad` upward for one condition. Every fraction
/// reuses the same replicate seeds.
pub fn critical_threshold(
    cfg: &ScenarioConfig,
    t: &ThresholdConfig,
    replicates: usize,
    data_dir: Option<&Path>,
) -> Result<ThresholdResult> {
    if !(t.resolution > 0.0) || t.min_fraction > t.max_fraction {
        return Err(SimError::Config(
            "threshold needs resolution > 0 and min_fraction <= max_fraction".into(),
        ));
    }
    if t.level <= 0.0 {
        return Ok(ThresholdResult {
            point: Vec::new(),
            threshold: Some(t.min_fraction),
            bracket: (None, Some(t.min_fraction)),
            scan: Vec::new(),
        });
    }
    let field = t.metric.field();
    let mut scan = Vec::new();
    let mut below = None;
    for fraction in scan_fractions(t) {
        let mut c = cfg.clone();
        c.adversary.fraction_bad = fraction;
        let prepared = Prepared::new(c, data_dir)?;
        let results: Vec<ReplicateResult> = (0..replicates)
            .into_par_iter()
            .map(|k| run_prepared(&prepared, k))
            .collect();
        let ok: Vec<_> = results.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let vals: Vec<Option<f64>> = ok.iter().map(|m| m.targeted.get(field)).collect();
        let (mean, stderr, k) = mean_stderr(&vals);
        log::info!("{}: fraction {fraction:.3} -> mean targeted {field} {mean:?}", cfg.name);
        scan.push(ScanStep {
            fraction,
            mean,
            stderr,
            k,
            n_failed: results.len() - ok.len(),
        });
        if mean.is_some_and(|m| m >= t.level) {
            return Ok(ThresholdResult {
                point: Vec::new(),
                threshold: Some(fraction),
                bracket: (below, Some(fraction)),
                scan,
            });
        }
        below = Some(fraction);
    }
    Ok(ThresholdResult {
        point: Vec::new(),
        threshold: None,
        bracket: (below, None),
        scan,
    })
}

/// Runs the threshold search at every grid point of `cfg` and writes
/// `thresholds.csv` (one row per condition) and `threshold_scan.csv`.
pub fn run_thresholds(
    cfg: &ScenarioConfig,
    out: &Path,
    replicates: usize,
    jobs: Option<usize>,
    data_dir: Option<&Path>,
) -> Result<Vec<ThresholdResult>> {
    let t = cfg
        .threshold
        .ok_or_else(|| SimError::Config(format!("scenario `{}` has no [threshold] section", cfg.name)))?;
    let points = grid_points(cfg)?;
    let pool = build_pool(jobs)?;
    let mut results = Vec::new();
    for p in &points {
        let run = || critical_threshold(&p.cfg, &t, replicates, data_dir);
        let mut r = match &pool {
            Some(pool) => pool.install(run)?,
            None => run()?,
        };
        r.point = p.coords.clone();
        results.push(r);
    }
    std::fs::create_dir_all(out).map_err(|e| SimError::io(out, e))?;
    std::fs::write(out.join("scenario.toml"), cfg.to_toml_string()).map_err(|e| SimError::io(out, e))?;
    let axes: Vec<String> = cfg
        .sweep
        .iter()
        .flat_map(|s| s.axes.iter().map(|a| a.path.clone()))
        .collect();
    write_thresholds(&out.join("thresholds.csv"), &cfg.name, &axes, &t, &results)?;
    write_scan(&out.join("threshold_scan.csv"), &cfg.name, &axes, &results)?;
    Ok(results)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn point_cells(axes: &[String], point: &[(String, String)]) -> Vec<String> {
    axes.iter()
        .map(|a| {
            point
                .iter()
                .find(|(k, _)| k == a)
                .map(|(_, v)| v.clone())
                .unwrap_or_default()
        })
        .collect()
}

pub fn write_thresholds(
    path: &Path,
    scenario: &str,
    axes: &[String],
    t: &ThresholdConfig,
    results: &[ThresholdResult],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["scenario".to_string()];
    header.extend(axes.iter().cloned());
    header.extend(["metric", "level", "threshold", "lower", "upper", "reached"].map(String::from));
    w.write_record(&header)?;
    for r in results {
        let mut rec = vec![scenario.to_string()];
        rec.extend(point_cells(axes, &r.point));
        rec.extend([
            t.metric.field().to_string(),
            format!("{}", t.level),
            cell(r.threshold),
            cell(r.bracket.0),
            cell(r.bracket.1),
            r.threshold.is_some().to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn write_scan(path: &Path, scenario: &str, axes: &[String], results: &[ThresholdResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["scenario".to_string()];
    header.extend(axes.iter().cloned());
    header.extend(["fraction_bad", "mean", "stderr", "k", "n_failed"].map(String::from));
    w.write_record(&header)?;
    for r in results {
        for s in &r.scan {
            let mut rec = vec![scenario.to_string()];
            rec.extend(point_cells(axes, &r.point));
            rec.extend([
                format!("{}", s.fraction),
                cell(s.mean),
                cell(s.stderr),
                s.k.to_string(),
                s.n_failed.to_string(),
            ]);
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| SimError::io(path, e))
}
