use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use notesim_core::experiments::calibrate::{write_calibration, CalibrationPoint};
use notesim_core::experiments::presets::{preset, preset_names, resolve_scenario};
use notesim_core::experiments::{
    calibrate, run_grid, run_thresholds, RunOptions, ScenarioConfig, ThresholdMetric, DATA_DIR_ENV,
};
use notesim_core::network::ingest_with_stats;
use notesim_core::{Result, SimError};

#[derive(Parser)]
#[command(
    name = "notesim",
    version,
    about = "Simulate crowd-sourced note scoring under honest and adversarial raters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build degree tables from a ratings TSV.
    Ingest {
        /// Ratings file with `noteId` and `raterParticipantId` columns.
        input: PathBuf,
        /// Output directory; defaults to $NOTESIM_DATA_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        min_note_degree: u32,
        #[arg(long, default_value_t = 10)]
        min_rater_degree: u32,
    },
    /// Run the replicates of one scenario, ignoring any sweep axes.
    Run {
        #[command(flatten)]
        common: Common,
        /// Skip the per-replicate fitted-parameter files.
        #[arg(long)]
        no_fitted: bool,
    },
    /// Run every point of a scenario's sweep grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Find the critical fraction of bad raters for each condition.
    Threshold {
        #[command(flatten)]
        common: Common,
        /// Targeted-frame metric to threshold: suppression or pollution.
        #[arg(long)]
        metric: Option<ThresholdMetric>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Rejection search over population parameters.
    Calibrate {
        /// Scenario or preset supplying fixed values and search settings.
        #[arg(long, default_value = "figS2")]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of parameter draws (accepts `1e5`).
        #[arg(long, value_parser = parse_count)]
        draws: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        mc_pairs: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Inspect the preset library.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// Print every preset name with its description.
    List,
    /// Print a preset as TOML.
    Show { name: String },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML or JSON) or preset name.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Use the scenario's full-scale replicate count.
    #[arg(long)]
    full: bool,
    /// Skip work already listed in the output's manifest.
    #[arg(long)]
    resume: bool,
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1e19 => Ok(x as u64),
        _ => Err(format!("`{s}` is not a non-negative count")),
    }
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = resolve_scenario(&self.scenario)?;
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            replicates: self.replicates,
            full: self.full,
            resume: self.resume,
            jobs: self.jobs,
            write_fitted: false,
            data_dir: data_dir(),
        }
    }
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

fn print_summary(cfg: &ScenarioConfig, run: &notesim_core::experiments::GridRun) {
    let failed = run.new_results.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "{}: {} replicate(s) run, {} skipped, {} failed",
        cfg.name,
        run.new_results.len(),
        run.skipped,
        failed
    );
    for row in run
        .summary
        .iter()
        .filter(|r| r.metric == "overall_suppression" || r.metric == "overall_pollution")
    {
        let point: Vec<String> = row.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
        println!(
            "  [{}] {} = {} ± {}",
            point.join(" "),
            row.metric,
            fmt(row.mean),
            fmt(row.stderr)
        );
    }
    println!("results: {}", run.results_path.display());
    println!("summary: {}", run.summary_path.display());
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest {
            input,
            out,
            min_note_degree,
            min_rater_degree,
        } => {
            let out = out
                .or_else(data_dir)
                .ok_or_else(|| SimError::Config(format!("pass --out or set {DATA_DIR_ENV}")))?;
            let (tables, stats) = ingest_with_stats(&input, min_note_degree, min_rater_degree)?;
            tables.write_csv(&out)?;
            println!(
                "read {} rows ({} distinct ratings): {} notes, {} raters",
                stats.rows, stats.distinct_ratings, stats.notes, stats.raters
            );
            println!(
                "kept {} notes with >= {min_note_degree} ratings and {} raters with >= {min_rater_degree} ratings",
                tables.note_degrees.len(),
                tables.rater_degrees.len()
            );
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Run { common, no_fitted } => {
            let mut cfg = common.scenario()?;
            cfg.sweep = None;
            let mut opts = common.options();
            opts.write_fitted = !no_fitted;
            let run = run_grid(&cfg, &common.out, &opts)?;
            print_summary(&cfg, &run);
            Ok(run.new_results.iter().all(|r| r.outcome.is_ok()))
        }
        Command::Sweep { common } => {
            let cfg = common.scenario()?;
            let run = run_grid(&cfg, &common.out, &common.options())?;
            print_summary(&cfg, &run);
            Ok(run.new_results.iter().all(|r| r.outcome.is_ok()))
        }
        Command::Threshold {
            common,
            metric,
            level,
            resolution,
        } => {
            let mut cfg = common.scenario()?;
            let mut t = cfg.threshold.unwrap_or_default();
            if let Some(m) = metric {
                t.metric = m;
            }
            if let Some(l) = level {
                t.level = l;
            }
            if let Some(r) = resolution {
                t.resolution = r;
            }
            cfg.threshold = Some(t);
            cfg.validate()?;
            let opts = common.options();
            let reps = opts.replicates_for(&cfg);
            let results = run_thresholds(&cfg, &common.out, reps, common.jobs, opts.data_dir.as_deref())?;
            for r in &results {
                let point: Vec<String> = r.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let shown = r.threshold.map_or("not reached".to_string(), |x| format!("{x:.3}"));
                println!("[{}] {} threshold: {shown}", point.join(" "), t.metric.field());
            }
            println!("wrote {}", common.out.join("thresholds.csv").display());
            Ok(true)
        }
        Command::Calibrate {
            scenario,
            out,
            seed,
            draws,
            epsilon,
            mc_pairs,
            jobs,
        } => {
            let cfg = resolve_scenario(&scenario)?;
            let mut search = cfg.calibrate.unwrap_or_default();
            if let Some(d) = draws {
                search.n_draws = d;
            }
            if let Some(e) = epsilon {
                search.epsilon = e;
            }
            if let Some(m) = mc_pairs {
                search.mc_pairs = m;
            }
            let base = CalibrationPoint::from_scenario(&cfg.population, &cfg.global);
            let seed = seed.unwrap_or(cfg.base_seed);
            let pool = notesim_core::experiments::sweep::build_pool(jobs)?;
            let run = || calibrate(&search, &base, cfg.global.mu, seed);
            let result = match &pool {
                Some(p) => p.install(run)?,
                None => run()?,
            };
            write_calibration(&out, &result)?;
            println!(
                "acceptance rate: {:.6} ({} of {} draws, epsilon {}, {} pairs per draw)",
                result.acceptance_rate(),
                result.n_accepted,
                result.n_draws,
                result.epsilon,
                result.mc_pairs
            );
            Ok(true)
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for name in preset_names() {
                        let cfg = preset(name)?;
                        println!("{name:<16} {}", cfg.description);
                    }
                }
                PresetAction::Show { name } => print!("{}", preset(&name)?.to_toml_string()),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some replicates failed; see the error column in results.csv");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
