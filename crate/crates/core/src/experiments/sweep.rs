use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{value_label, ScenarioConfig};
use super::replicate::{run_prepared_with, Prepared, ReplicateResult};
use super::results::{aggregate_rows, read_results, write_summary, FlatRow, ResultsWriter, SummaryRow};
use crate::error::{Result, SimError};

pub const MANIFEST: &str = "sweep.manifest";
pub const RESULTS: &str = "results.csv";
pub const SUMMARY: &str = "summary.csv";

/// One grid point: the resolved scenario and its coordinates.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub index: usize,
    pub coords: Vec<(String, String)>,
    pub cfg: ScenarioConfig,
}

/// Expands the scenario's sweep axes (cartesian product, last axis fastest).
/// A scenario without a sweep is a single point with no coordinates.
pub fn grid_points(cfg: &ScenarioConfig) -> Result<Vec<GridPoint>> {
    cfg.validate()?;
    let Some(spec) = &cfg.sweep else {
        return Ok(vec![GridPoint {
            index: 0,
            coords: Vec::new(),
            cfg: cfg.clone(),
        }]);
    };
    let mut points: Vec<(Vec<(String, String)>, ScenarioConfig)> = vec![(Vec::new(), cfg.clone())];
    for axis in &spec.axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for (coords, base) in &points {
            for v in &axis.values {
                let mut c = coords.clone();
                c.push((axis.path.clone(), value_label(v)));
                next.push((c, base.with_param(&axis.path, v)?));
            }
        }
        points = next;
    }
    points
        .into_iter()
        .enumerate()
        .map(|(index, (coords, mut cfg))| {
            cfg.sweep = None;
            cfg.validate()?;
            Ok(GridPoint { index, coords, cfg })
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's replicate count.
    pub replicates: Option<usize>,
    /// Use the scenario's full-scale replicate count.
    pub full: bool,
    /// Skip (point, replicate) pairs listed in the manifest.
    pub resume: bool,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Write fitted parameters of every replicate under `out/fitted/`.
    pub write_fitted: bool,
    pub data_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn replicates_for(&self, cfg: &ScenarioConfig) -> usize {
        self.replicates.unwrap_or(if self.full {
            cfg.full_replicates
        } else {
            cfg.n_replicates
        })
    }
}

fn manifest_line(point: &GridPoint, replicate: usize) -> String {
    let coords: Vec<String> = point.coords.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{}\t{}\t{}", point.index, replicate, coords.join(" "))
}

fn read_manifest(path: &Path) -> Result<BTreeSet<String>> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeSet::new()),
        Err(e) => return Err(SimError::io(path, e)),
    };
    std::io::BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| SimError::io(path, e)))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .collect()
}

pub fn build_pool(jobs: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    jobs.map(|n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SimError::Config(format!("cannot start {n} workers: {e}")))
    })
    .transpose()
}

/// Output of a grid run.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Vec<SummaryRow>,
    pub new_results: Vec<ReplicateResult>,
    pub skipped: usize,
}

/// Runs every replicate of every grid point, appending rows to
/// `results.csv` and completed pairs to `sweep.manifest`, then rewrites
/// `summary.csv`. With `resume`, pairs already in the manifest are skipped
/// and rows from unfinished pairs are dropped; rerunning a finished grid
/// changes no file.
pub fn run_grid(cfg: &ScenarioConfig, out: &Path, opts: &RunOptions) -> Result<GridRun> {
    let points = grid_points(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| SimError::io(out, e))?;
    let results_path = out.join(RESULTS);
    let manifest_path = out.join(MANIFEST);
    let summary_path = out.join(SUMMARY);
    let axes: Vec<String> = cfg
        .sweep
        .iter()
        .flat_map(|s| s.axes.iter().map(|a| a.path.clone()))
        .collect();

    let done = if opts.resume {
        read_manifest(&manifest_path)?
    } else {
        BTreeSet::new()
    };
    if opts.resume && results_path.exists() {
        // keep only rows whose pair finished
        let rows = read_results(&results_path)?;
        let keep: Vec<&FlatRow> = rows
            .iter()
            .filter(|r| {
                points
                    .iter()
                    .find(|p| p.coords == r.point)
                    .is_some_and(|p| done.contains(&manifest_line(p, r.replicate)))
            })
            .collect();
        if keep.len() != rows.len() {
            std::fs::remove_file(&results_path).map_err(|e| SimError::io(&results_path, e))?;
            let mut w = ResultsWriter::append(&results_path, &axes)?;
            for r in keep {
                w.write(r)?;
            }
        }
    } else {
        for p in [&results_path, &manifest_path] {
            if p.exists() {
                std::fs::remove_file(p).map_err(|e| SimError::io(p, e))?;
            }
        }
    }
    let resolved = out.join("scenario.toml");
    let text = cfg.to_toml_string();
    if std::fs::read_to_string(&resolved).ok().as_deref() != Some(text.as_str()) {
        std::fs::write(&resolved, text).map_err(|e| SimError::io(&resolved, e))?;
    }

    let mut writer = ResultsWriter::append(&results_path, &axes)?;
    let mut manifest = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&manifest_path)
        .map_err(|e| SimError::io(&manifest_path, e))?;
    let pool = build_pool(opts.jobs)?;
    let fitted_dir = opts.write_fitted.then(|| out.join("fitted"));
    if let Some(d) = &fitted_dir {
        std::fs::create_dir_all(d).map_err(|e| SimError::io(d, e))?;
    }
    let mut new_results = Vec::new();
    let mut skipped = 0;
    for point in &points {
        let n = opts.replicates_for(&point.cfg);
        let pending: Vec<usize> = (0..n).filter(|&k| !done.contains(&manifest_line(point, k))).collect();
        skipped += n - pending.len();
        if pending.is_empty() {
            continue;
        }
        let prepared = Prepared::new(point.cfg.clone(), opts.data_dir.as_deref())?;
        if point.index == 0 {
            if let Some(t) = &prepared.tables {
                t.write_csv(out)?;
            }
        }
        let run_one = |k: &usize| {
            let prefix = fitted_dir
                .as_ref()
                .map(|d| d.join(format!("point{}_replicate{}", point.index, k)));
            let mut r = run_prepared_with(&prepared, *k, prefix.as_deref());
            r.point = point.coords.clone();
            r
        };
        let batch: Vec<ReplicateResult> = match &pool {
            Some(pool) => pool.install(|| pending.par_iter().map(run_one).collect()),
            None => pending.par_iter().map(run_one).collect(),
        };
        for r in batch {
            writer.write(&r.flat())?;
            if r.outcome.is_ok() {
                writeln!(manifest, "{}", manifest_line(point, r.replicate))
                    .map_err(|e| SimError::io(&manifest_path, e))?;
            }
            new_results.push(r);
        }
        manifest.flush().map_err(|e| SimError::io(&manifest_path, e))?;
    }
    drop(writer);
    let rows = read_results(&results_path)?;
    let summary = aggregate_rows(&rows);
    let tmp = out.join("summary.csv.tmp");
    write_summary(&tmp, &summary)?;
    if std::fs::read(&tmp).ok() != std::fs::read(&summary_path).ok() {
        std::fs::rename(&tmp, &summary_path).map_err(|e| SimError::io(&summary_path, e))?;
    } else {
        std::fs::remove_file(&tmp).map_err(|e| SimError::io(&tmp, e))?;
    }
    Ok(GridRun {
        results_path,
        summary_path,
        summary,
        new_results,
        skipped,
    })
}

/// Runs replicates in memory without touching disk.
pub fn run_in_memory(cfg: &ScenarioConfig, replicates: usize, data_dir: Option<&Path>) -> Result<Vec<ReplicateResult>> {
    let points = grid_points(cfg)?;
    let mut out = Vec::new();
    for point in points {
        let prepared = Prepared::new(point.cfg.clone(), data_dir)?;
        let batch: Vec<ReplicateResult> = (0..replicates)
            .into_par_iter()
            .map(|k| {
                let mut r = run_prepared_with(&prepared, k, None);
                r.point = point.coords.clone();
                r
            })
            .collect();
        out.extend(batch);
    }
    Ok(out)
}
