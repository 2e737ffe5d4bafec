//! Rejection search for population parameters whose expected rating mix
//! matches a target.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::population::{probs_from_score, GlobalParams, PopulationSpec, SideSpec};
use crate::rng::{derive_seed, stream, Stream};

/// HELPFUL, SOMEWHAT, NOT HELPFUL fractions of the empirical dump.
pub const TARGET_MIX: [f64; 3] = [0.596, 0.030, 0.374];

/// Names of the searched parameters, in row order.
pub const PARAM_NAMES: [&str; 8] = [
    "mu_i",
    "sigma_i_u",
    "sigma_i_n",
    "rho_u",
    "rho_n",
    "sigma_f_u",
    "sigma_f_n",
    "gamma",
];

/// Which parameters are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// All eight parameters.
    #[default]
    Full,
    /// Keep `mu_i`, `sigma_i_n` and `gamma` at the scenario values and draw
    /// the other five.
    Defaults,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSearch {
    pub n_draws: u64,
    pub epsilon: f64,
    /// Agent pairs averaged per draw.
    pub mc_pairs: usize,
    pub mode: CalibrationMode,
    /// Keep every draw instead of only accepted ones.
    pub keep_all: bool,
    pub mean_bounds: [f64; 2],
    pub sigma_bounds: [f64; 2],
    pub gamma_bounds: [f64; 2],
    pub bins: usize,
}

impl Default for CalibrationSearch {
    fn default() -> Self {
        CalibrationSearch {
            n_draws: 100_000,
            epsilon: 0.0012,
            mc_pairs: 10_000,
            mode: CalibrationMode::Full,
            keep_all: false,
            mean_bounds: [-1.0, 1.0],
            sigma_bounds: [0.0, 1.0],
            gamma_bounds: [0.0, 100.0],
            bins: 20,
        }
    }
}

impl CalibrationSearch {
    pub fn validation_errors(&self, errs: &mut Vec<String>) {
        if !(self.epsilon > 0.0) {
            errs.push("calibrate.epsilon must be > 0".into());
        }
        if self.mc_pairs == 0 {
            errs.push("calibrate.mc_pairs must be >= 1".into());
        }
        if self.bins == 0 {
            errs.push("calibrate.bins must be >= 1".into());
        }
        for (name, b) in [
            ("mean_bounds", self.mean_bounds),
            ("sigma_bounds", self.sigma_bounds),
            ("gamma_bounds", self.gamma_bounds),
        ] {
            if !(b[0] <= b[1]) || !b[0].is_finite() || !b[1].is_finite() {
                errs.push(format!("calibrate.{name} must be an ordered finite pair"));
            }
        }
        if self.sigma_bounds[0] < 0.0 || self.gamma_bounds[0] < 0.0 {
            errs.push("calibrate sigma and gamma bounds must be >= 0".into());
        }
    }

    /// Range each parameter is drawn from. Polarizations use the
    /// non-negative half of the mean range, since `±ρ` mixtures are
    /// symmetric.
    pub fn bounds(&self) -> [[f64; 2]; 8] {
        let rho = [self.mean_bounds[0].max(0.0), self.mean_bounds[1].max(0.0)];
        let s = self.sigma_bounds;
        [self.mean_bounds, s, s, rho, rho, s, s, self.gamma_bounds]
    }
}

/// One parameter combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub values: [f64; 8],
}

impl CalibrationPoint {
    pub fn get(&self, name: &str) -> Option<f64> {
        PARAM_NAMES.iter().position(|n| *n == name).map(|k| self.values[k])
    }

    /// The point a scenario's population and global parameters describe.
    /// Polarization and bias spread are taken from the `+` group.
    pub fn from_scenario(pop: &PopulationSpec, global: &GlobalParams) -> Self {
        CalibrationPoint {
            values: [
                pop.raters.mu_i,
                pop.raters.sigma_i,
                pop.notes.sigma_i,
                pop.raters.polarization(),
                pop.notes.polarization(),
                pop.raters.sigma_plus,
                pop.notes.sigma_plus,
                global.gamma,
            ],
        }
    }

    pub fn population(&self, n_raters: usize, n_notes: usize) -> PopulationSpec {
        let [mu_i, siu, sin, rho_u, rho_n, sfu, sfn, _] = self.values;
        PopulationSpec {
            raters: SideSpec::unpolarized(n_raters, mu_i, siu, sfu).with_polarization(rho_u),
            notes: SideSpec::unpolarized(n_notes, mu_i, sin, sfn).with_polarization(rho_n),
        }
    }
}

/// Squared distance between a rating mix and [`TARGET_MIX`], with the
/// SOMEWHAT share taken as the remainder.
pub fn mix_distance(p_helpful: f64, p_not: f64) -> f64 {
    (p_helpful - TARGET_MIX[0]).powi(2)
        + (p_not - TARGET_MIX[2]).powi(2)
        + (1.0 - p_helpful - p_not - TARGET_MIX[1]).powi(2)
}

/// Monte Carlo estimate of the expected HELPFUL, SOMEWHAT and NOT HELPFUL
/// probabilities over independently drawn rater-note pairs.
pub fn expected_mix(point: &CalibrationPoint, mu: f64, pairs: usize, seed: u64) -> [f64; 3] {
    let [mu_i, siu, sin, rho_u, rho_n, sfu, sfn, gamma] = point.values;
    let mut rng = stream(seed, Stream::Calibrate);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let side = |rng: &mut crate::rng::SimRng, rho: f64, sf: f64| {
        let c = if rng.random_bool(0.5) { rho } else { -rho };
        c + sf * std.sample(rng)
    };
    let (mut h, mut n) = (0.0, 0.0);
    for _ in 0..pairs {
        let iu = mu_i + siu * std.sample(&mut rng);
        let inn = mu_i + sin * std.sample(&mut rng);
        let fu = side(&mut rng, rho_u, sfu);
        let fnn = side(&mut rng, rho_n, sfn);
        let p = probs_from_score(gamma, mu + iu + inn + fu * fnn);
        h += p.helpful;
        n += p.not_helpful;
    }
    let k = pairs as f64;
    [h / k, 1.0 - h / k - n / k, n / k]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub draw: u64,
    pub point: CalibrationPoint,
    pub mix: [f64; 3],
    pub distance: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub param: &'static str,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub n_draws: u64,
    pub n_accepted: u64,
    pub mc_pairs: usize,
    pub epsilon: f64,
    /// Accepted draws, or every draw with `keep_all`.
    pub rows: Vec<CalibrationRow>,
    /// Histograms of accepted draws per parameter.
    pub histograms: Vec<Histogram>,
}

impl CalibrationResult {
    pub fn acceptance_rate(&self) -> f64 {
        if self.n_draws == 0 {
            0.0
        } else {
            self.n_accepted as f64 / self.n_draws as f64
        }
    }
}

fn draw_point(search: &CalibrationSearch, base: &CalibrationPoint, seed: u64) -> CalibrationPoint {
    let mut rng = stream(seed, Stream::Calibrate);
    let bounds = search.bounds();
    let mut values = base.values;
    for (k, b) in bounds.iter().enumerate() {
        let fixed =
            search.mode == CalibrationMode::Defaults && matches!(PARAM_NAMES[k], "mu_i" | "sigma_i_n" | "gamma");
        let u: f64 = rng.random();
        if !fixed {
            values[k] = b[0] + u * (b[1] - b[0]);
        }
    }
    CalibrationPoint { values }
}

/// Draws `search.n_draws` parameter sets uniformly within the bounds and
/// keeps those whose expected mix lies within `epsilon` of the target.
/// `base` supplies the fixed values in [`CalibrationMode::Defaults`].
pub fn calibrate(search: &CalibrationSearch, base: &CalibrationPoint, mu: f64, seed: u64) -> Result<CalibrationResult> {
    let mut errs = Vec::new();
    search.validation_errors(&mut errs);
    if !errs.is_empty() {
        return Err(SimError::Config(errs.join("; ")));
    }
    let rows: Vec<CalibrationRow> = (0..search.n_draws)
        .into_par_iter()
        .filter_map(|draw| {
            let s = derive_seed(seed, draw);
            let point = draw_point(search, base, s);
            let mix = expected_mix(&point, mu, search.mc_pairs, derive_seed(s, 1));
            let distance = mix_distance(mix[0], mix[2]);
            let accepted = distance < search.epsilon;
            (accepted || search.keep_all).then_some(CalibrationRow {
                draw,
                point,
                mix,
                distance,
                accepted,
            })
        })
        .collect();
    let n_accepted = rows.iter().filter(|r| r.accepted).count() as u64;
    let histograms = PARAM_NAMES
        .iter()
        .zip(search.bounds())
        .map(|(&param, b)| {
            let k = PARAM_NAMES.iter().position(|n| *n == param).expect("known name");
            let width = (b[1] - b[0]) / search.bins as f64;
            let edges = (0..=search.bins).map(|j| b[0] + j as f64 * width).collect();
            let mut counts = vec![0u64; search.bins];
            for r in rows.iter().filter(|r| r.accepted) {
                let v = r.point.values[k];
                let j = if width > 0.0 {
                    ((v - b[0]) / width).floor() as usize
                } else {
                    0
                };
                counts[j.min(search.bins - 1)] += 1;
            }
            Histogram { param, edges, counts }
        })
        .collect();
    Ok(CalibrationResult {
        n_draws: search.n_draws,
        n_accepted,
        mc_pairs: search.mc_pairs,
        epsilon: search.epsilon,
        rows,
        histograms,
    })
}

/// Writes `calibration_draws.csv`, `calibration_histograms.csv` and
/// `calibration_stats.csv` under `out`.
pub fn write_calibration(out: &Path, result: &CalibrationResult) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| SimError::io(out, e))?;
    let mut w = csv::Writer::from_path(out.join("calibration_draws.csv"))?;
    let mut header = vec!["draw"];
    header.extend(PARAM_NAMES);
    header.extend(["p_helpful", "p_somewhat", "p_not_helpful", "distance", "accepted"]);
    w.write_record(&header)?;
    for r in &result.rows {
        let mut rec = vec![r.draw.to_string()];
        rec.extend(r.point.values.iter().map(|v| v.to_string()));
        rec.extend(r.mix.iter().map(|v| v.to_string()));
        rec.push(r.distance.to_string());
        rec.push(r.accepted.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| SimError::io(out, e))?;

    let mut w = csv::Writer::from_path(out.join("calibration_histograms.csv"))?;
    w.write_record(["param", "bin_lo", "bin_hi", "count"])?;
    for h in &result.histograms {
        for (j, c) in h.counts.iter().enumerate() {
            w.write_record([
                h.param.to_string(),
                h.edges[j].to_string(),
                h.edges[j + 1].to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| SimError::io(out, e))?;

    let mut w = csv::Writer::from_path(out.join("calibration_stats.csv"))?;
    w.write_record(["n_draws", "n_accepted", "acceptance_rate", "epsilon", "mc_pairs"])?;
    w.write_record([
        result.n_draws.to_string(),
        result.n_accepted.to_string(),
        result.acceptance_rate().to_string(),
        result.epsilon.to_string(),
        result.mc_pairs.to_string(),
    ])?;
    w.flush().map_err(|e| SimError::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_point() -> CalibrationPoint {
        CalibrationPoint {
            values: [0.25, 0.2, 0.5, 0.0, 0.0, 0.5, 0.5, 30.0],
        }
    }

    #[test]
    fn distance_of_target_is_zero() {
        assert!(mix_distance(0.596, 0.374) < 1e-30);
        assert!((mix_distance(1.0, 0.0) - (0.404f64.powi(2) + 0.374f64.powi(2) + 0.03f64.powi(2))).abs() < 1e-15);
    }

    #[test]
    fn huge_epsilon_accepts_everything() {
        let s = CalibrationSearch {
            n_draws: 200,
            epsilon: 3.0,
            mc_pairs: 50,
            ..Default::default()
        };
        let r = calibrate(&s, &default_point(), 0.17, 5).unwrap();
        assert_eq!(r.n_accepted, 200);
        assert_eq!(r.acceptance_rate(), 1.0);
        for h in &r.histograms {
            assert_eq!(h.counts.iter().sum::<u64>(), 200);
        }
    }

    #[test]
    fn default_point_is_accepted() {
        let mix = expected_mix(&default_point(), 0.17, 200_000, 3);
        let d = mix_distance(mix[0], mix[2]);
        assert!(d < 0.0012, "mix {mix:?} distance {d}");
    }

    #[test]
    fn defaults_mode_keeps_fixed_values() {
        let s = CalibrationSearch {
            n_draws: 50,
            epsilon: 3.0,
            mc_pairs: 10,
            mode: CalibrationMode::Defaults,
            ..Default::default()
        };
        let r = calibrate(&s, &default_point(), 0.17, 9).unwrap();
        for row in &r.rows {
            assert_eq!(row.point.get("mu_i"), Some(0.25));
            assert_eq!(row.point.get("sigma_i_n"), Some(0.5));
            assert_eq!(row.point.get("gamma"), Some(30.0));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = CalibrationSearch {
            n_draws: 30,
            epsilon: 0.05,
            mc_pairs: 100,
            keep_all: true,
            ..Default::default()
        };
        let a = calibrate(&s, &default_point(), 0.17, 1).unwrap();
        let b = calibrate(&s, &default_point(), 0.17, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 30);
    }
}
