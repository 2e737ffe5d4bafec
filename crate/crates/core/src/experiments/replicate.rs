use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use super::config::{GraphSource, ScenarioConfig};
use crate::adversary::{assign_bad, effective_probs};
use crate::error::Result;
use crate::metrics::{metric_report, MetricReport};
use crate::network::{
    complete_graph, measure_ingroup_bias, rewire, sample_seed_graph, synth_degree_tables, DegreeSource, DegreeTables,
    HomophilyTarget, RatingGraph, RewireStats,
};
use crate::population::{draw_rating, sample_population, Group, NoteProfile, RaterProfile};
use crate::rng::{derive_seed, stream, Stream};
use crate::scorer::{score_pipeline_with, write_note_csv, write_rater_csv, PipelineOutput};

pub const DATA_DIR_ENV: &str = "NOTESIM_DATA_DIR";

/// A scenario with its degree tables resolved, ready to generate replicates.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: ScenarioConfig,
    pub tables: Option<DegreeTables>,
}

impl Prepared {
    /// Validates `cfg` and loads or draws its degree tables. Relative
    /// empirical paths resolve against `data_dir`.
    pub fn new(cfg: ScenarioConfig, data_dir: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let tables = match &cfg.network.graph {
            GraphSource::Complete => None,
            GraphSource::Synthetic(p) => Some(synth_degree_tables(p, cfg.base_seed)?),
            GraphSource::Empirical { dir } => {
                let dir = resolve(dir, data_dir);
                Some(DegreeTables::read_csv(&dir, DegreeSource::EmpiricalFile)?)
            }
        };
        Ok(Prepared { cfg, tables })
    }

    /// Like [`Prepared::new`] with the data directory taken from
    /// `NOTESIM_DATA_DIR`.
    pub fn from_env(cfg: ScenarioConfig) -> Result<Self> {
        let dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        Self::new(cfg, dir.as_deref())
    }
}

fn resolve(p: &Path, data_dir: Option<&Path>) -> PathBuf {
    match data_dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p.to_path_buf(),
    }
}

/// One generated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub raters: Vec<RaterProfile>,
    pub notes: Vec<NoteProfile>,
    pub graph: RatingGraph,
    pub phi: i8,
    pub realized_ingroup_bias: Option<f64>,
    pub rewire: Option<RewireStats>,
}

/// Side of zero a bias falls on; drives in-group rewiring.
pub fn bias_side(f: f64) -> Group {
    if f >= 0.0 {
        Group::Plus
    } else {
        Group::Minus
    }
}

/// Builds the graph, draws agents and adversaries, rewires toward the target
/// in-group bias and draws every rating.
pub fn generate_dataset(p: &Prepared, seed: u64) -> Result<Dataset> {
    let cfg = &p.cfg;
    let mut graph = match (&cfg.network.graph, &p.tables) {
        (GraphSource::Complete, _) | (_, None) => {
            complete_graph(cfg.population.raters.count, cfg.population.notes.count)
        }
        (_, Some(t)) => sample_seed_graph(t, cfg.population.notes.count, seed)?,
    };
    let mut spec = cfg.population;
    spec.raters.count = graph.n_raters;
    let (mut raters, notes) = sample_population(&spec, seed)?;
    assign_bad(&mut raters, &cfg.adversary, seed)?;
    let phi = if cfg.randomize_phi {
        if stream(seed, Stream::Target).random_bool(0.5) {
            1
        } else {
            -1
        }
    } else {
        cfg.adversary.phi
    };

    let rater_side: Vec<Group> = raters.iter().map(|r| bias_side(r.f)).collect();
    let note_side: Vec<Group> = notes.iter().map(|n| bias_side(n.f)).collect();
    let rewire_stats = if !matches!(cfg.network.graph, GraphSource::Complete) && cfg.network.n_pair_swaps > 0 {
        let target = HomophilyTarget::from_ingroup_bias(cfg.network.ingroup_bias);
        let stats = rewire(
            &mut graph,
            &rater_side,
            &note_side,
            target,
            cfg.network.n_pair_swaps,
            seed,
        )?;
        if (stats.ingroup_bias_after - cfg.network.ingroup_bias).abs() > 0.05 {
            log::warn!(
                "{}: realized in-group bias {:.3} is far from the target {:.3}",
                cfg.name,
                stats.ingroup_bias_after,
                cfg.network.ingroup_bias
            );
        }
        Some(stats)
    } else {
        None
    };
    let realized = measure_ingroup_bias(&graph, &rater_side, &note_side).ok();

    let mut adversary = cfg.adversary;
    adversary.phi = phi;
    let mut behavior = stream(seed, Stream::Behavior);
    let mut draws = stream(seed, Stream::Ratings);
    for e in graph.edges.iter_mut() {
        let probs = effective_probs(
            &cfg.global,
            &raters[e.rater as usize],
            &notes[e.note as usize],
            &adversary,
            &mut behavior,
        );
        e.rating = Some(draw_rating(&probs, &mut draws));
    }
    Ok(Dataset {
        raters,
        notes,
        graph,
        phi,
        realized_ingroup_bias: realized,
        rewire: rewire_stats,
    })
}

/// Everything recorded about one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub scenario: String,
    pub replicate: usize,
    pub seed: u64,
    /// Sweep coordinates as `(path, value)`; empty for single scenarios.
    pub point: Vec<(String, String)>,
    pub outcome: std::result::Result<ReplicateMetrics, String>,
    /// Wall-clock seconds; logged, not written to result files.
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateMetrics {
    pub n_raters: usize,
    pub n_notes: usize,
    pub n_ratings: usize,
    pub raters_plus: usize,
    pub notes_plus: usize,
    pub n_bad: usize,
    pub phi: i8,
    pub nominal_ingroup_bias: f64,
    pub realized_ingroup_bias: Option<f64>,
    /// HELPFUL, SOMEWHAT, NOT HELPFUL fractions.
    pub rating_mix: [f64; 3],
    pub n_removed: usize,
    pub fit_epochs: usize,
    pub fit_converged: bool,
    pub overall: MetricReport,
    pub targeted: MetricReport,
    pub non_targeted: MetricReport,
}

pub fn replicate_seed(base_seed: u64, index: usize) -> u64 {
    derive_seed(base_seed, index as u64)
}

/// Scores a generated dataset and computes every metric.
pub fn evaluate(p: &Prepared, data: &Dataset, seed: u64) -> Result<(PipelineOutput, ReplicateMetrics)> {
    let cfg = &p.cfg;
    let mut hyper = cfg.fit;
    hyper.seed = derive_seed(seed, cfg.fit.seed);
    let out = score_pipeline_with(&data.graph, &hyper, &cfg.filter)?;
    let mut adversary = cfg.adversary;
    adversary.phi = data.phi;
    let frame = |pred: &dyn Fn(&NoteProfile) -> bool| {
        metric_report(&data.notes, &data.raters, &out.params, &out.status, &out.removed, |n| {
            pred(n)
        })
    };
    let metrics = ReplicateMetrics {
        n_raters: data.graph.n_raters,
        n_notes: data.graph.n_notes,
        n_ratings: data.graph.len(),
        raters_plus: data.raters.iter().filter(|r| r.group == Group::Plus).count(),
        notes_plus: data.notes.iter().filter(|n| n.group == Group::Plus).count(),
        n_bad: data.raters.iter().filter(|r| r.is_bad).count(),
        phi: data.phi,
        nominal_ingroup_bias: cfg.network.ingroup_bias,
        realized_ingroup_bias: data.realized_ingroup_bias,
        rating_mix: data.graph.rating_mix(),
        n_removed: out.n_removed(),
        fit_epochs: out.params.epochs_run,
        fit_converged: out.params.converged,
        overall: frame(&|_| true),
        targeted: frame(&|n| adversary.on_targeted_side(n)),
        non_targeted: frame(&|n| !adversary.on_targeted_side(n)),
    };
    Ok((out, metrics))
}

/// Generates, scores and evaluates replicate `index`. Failures are recorded
/// in the result rather than returned.
pub fn run_prepared(p: &Prepared, index: usize) -> ReplicateResult {
    run_prepared_with(p, index, None)
}

/// Like [`run_prepared`]; with a prefix, also writes `<prefix>_notes.csv` and
/// `<prefix>_raters.csv` holding the fitted parameters.
pub fn run_prepared_with(p: &Prepared, index: usize, fitted_prefix: Option<&Path>) -> ReplicateResult {
    let seed = replicate_seed(p.cfg.base_seed, index);
    let start = Instant::now();
    let outcome = generate_dataset(p, seed)
        .and_then(|d| evaluate(p, &d, seed))
        .and_then(|(out, m)| {
            if let Some(prefix) = fitted_prefix {
                write_fitted(prefix, &out)?;
            }
            Ok(m)
        })
        .map_err(|e| e.to_string());
    if let Err(e) = &outcome {
        log::error!("{} replicate {index} failed: {e}", p.cfg.name);
    }
    let runtime_s = start.elapsed().as_secs_f64();
    log::info!("{} replicate {index} done in {runtime_s:.1}s", p.cfg.name);
    ReplicateResult {
        scenario: p.cfg.name.clone(),
        replicate: index,
        seed,
        point: Vec::new(),
        outcome,
        runtime_s,
    }
}

fn write_fitted(prefix: &Path, out: &PipelineOutput) -> Result<()> {
    let with_suffix = |s: &str| {
        let mut name = prefix.as_os_str().to_owned();
        name.push(s);
        PathBuf::from(name)
    };
    write_note_csv(&with_suffix("_notes.csv"), &out.params, &out.status)?;
    write_rater_csv(&with_suffix("_raters.csv"), &out.params, &out.removed)
}

/// Runs replicate `index` of `cfg`, resolving empirical data from
/// `NOTESIM_DATA_DIR`.
pub fn run_replicate(cfg: &ScenarioConfig, index: usize) -> Result<ReplicateResult> {
    let p = Prepared::from_env(cfg.clone())?;
    Ok(run_prepared(&p, index))
}
