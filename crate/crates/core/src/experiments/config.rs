use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::calibrate::CalibrationSearch;
use crate::adversary::AdversaryConfig;
use crate::error::{Result, SimError};
use crate::network::SynthDegreeParams;
use crate::population::{GlobalParams, PopulationSpec};
use crate::scorer::{FilterConfig, FitHyper};

/// Where the rater-note graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum GraphSource {
    /// Every rater rates every note.
    Complete,
    /// Degree tables drawn from bounded power laws.
    Synthetic(SynthDegreeParams),
    /// Degree tables written by `ingest` (`note_degrees.csv`,
    /// `rater_degrees.csv`). Relative paths resolve against the data
    /// directory.
    Empirical { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub graph: GraphSource,
    /// Attempted double-edge swaps per replicate.
    #[serde(default = "default_swaps")]
    pub n_pair_swaps: u64,
    /// Target in-group bias `E_h` in [-1, 1].
    #[serde(default)]
    pub ingroup_bias: f64,
}

fn default_swaps() -> u64 {
    1_000_000
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            graph: GraphSource::Complete,
            n_pair_swaps: default_swaps(),
            ingroup_bias: 0.0,
        }
    }
}

/// Parameters of the threshold search over `adversary.fraction_bad`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    /// `suppression` or `pollution`, read in the targeted frame.
    pub metric: ThresholdMetric,
    pub level: f64,
    pub resolution: f64,
    pub min_fraction: f64,
    pub max_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMetric {
    Suppression,
    Pollution,
}

impl ThresholdMetric {
    pub fn field(self) -> &'static str {
        match self {
            ThresholdMetric::Suppression => "suppression",
            ThresholdMetric::Pollution => "pollution",
        }
    }
}

impl std::str::FromStr for ThresholdMetric {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "suppression" => Ok(ThresholdMetric::Suppression),
            "pollution" => Ok(ThresholdMetric::Pollution),
            _ => Err(SimError::Config(format!("unknown threshold metric `{s}`"))),
        }
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            metric: ThresholdMetric::Suppression,
            level: 0.9,
            resolution: 0.01,
            min_fraction: 0.0,
            max_fraction: 0.5,
        }
    }
}

/// One axis of a parameter grid: a dotted config path and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_max_points() -> usize {
    1000
}

/// Full description of one experimental condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub population: PopulationSpec,
    #[serde(default)]
    pub global: GlobalParams,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    /// Draw the coordinated target side per replicate instead of using
    /// `adversary.phi`.
    #[serde(default = "yes")]
    pub randomize_phi: bool,
    #[serde(default)]
    pub fit: FitHyper,
    #[serde(default)]
    pub filter: FilterConfig,
    /// Replicates run by default.
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    /// Replicate count for full-scale runs (`--full`).
    #[serde(default = "default_replicates")]
    pub full_replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrationSearch>,
}

fn yes() -> bool {
    true
}

fn default_replicates() -> usize {
    10
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Loads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        let cfg = parsed.map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks every component and reports all offending keys at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.population.validation_errors(&mut errs);
        if let Err(SimError::Config(m)) = self.global.validate() {
            errs.push(m);
        }
        self.adversary.validation_errors(&mut errs);
        self.fit.validation_errors(&mut errs);
        if !(-1.0..=1.0).contains(&self.network.ingroup_bias) {
            errs.push(format!(
                "network.ingroup_bias must lie in [-1, 1], got {}",
                self.network.ingroup_bias
            ));
        }
        if let GraphSource::Synthetic(p) = &self.network.graph {
            if p.n_notes == 0 || p.n_raters == 0 {
                errs.push("network.n_notes and network.n_raters must be positive".into());
            }
        }
        if self.n_replicates == 0 {
            errs.push("n_replicates must be >= 1".into());
        }
        if self.full_replicates == 0 {
            errs.push("full_replicates must be >= 1".into());
        }
        if let Some(s) = &self.sweep {
            if s.axes.is_empty() {
                errs.push("sweep.axes must not be empty".into());
            }
            for a in &s.axes {
                if a.values.is_empty() {
                    errs.push(format!("sweep axis `{}` has no values", a.path));
                }
            }
            let points: usize = s.axes.iter().map(|a| a.values.len().max(1)).product();
            if points > s.max_points {
                errs.push(format!(
                    "sweep has {points} points, above sweep.max_points = {}",
                    s.max_points
                ));
            }
            if errs.is_empty() {
                for a in &s.axes {
                    if let Some(v) = a.values.first() {
                        if let Err(e) = self.with_param(&a.path, v) {
                            errs.push(e.to_string());
                        }
                    }
                }
            }
        }
        if let Some(t) = &self.threshold {
            if !(t.resolution > 0.0) {
                errs.push("threshold.resolution must be > 0".into());
            }
            if !(0.0..=1.0).contains(&t.min_fraction)
                || !(0.0..=1.0).contains(&t.max_fraction)
                || t.min_fraction > t.max_fraction
            {
                errs.push("threshold fractions must satisfy 0 <= min_fraction <= max_fraction <= 1".into());
            }
        }
        if let Some(c) = &self.calibrate {
            c.validation_errors(&mut errs);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(errs.join("; ")))
        }
    }

    /// Copy with one parameter replaced. `path` is a dotted key such as
    /// `adversary.fraction_bad`. `population.raters.polarization` and
    /// `population.notes.polarization` set symmetric group means `±ρ`.
    pub fn with_param(&self, path: &str, value: &Value) -> Result<ScenarioConfig> {
        let mut tree = serde_json::to_value(self).expect("scenario serializes");
        let label = value_label(value);
        let (target, value) = match path.strip_suffix(".polarization") {
            Some(side) => {
                let rho = value
                    .as_f64()
                    .ok_or_else(|| SimError::Config(format!("{path} needs a number, got {value}")))?;
                set_path(&mut tree, &format!("{side}.mu_plus"), Value::from(rho))?;
                (format!("{side}.mu_minus"), Value::from(-rho))
            }
            None => (path.to_string(), value.clone()),
        };
        set_path(&mut tree, &target, value)?;
        serde_json::from_value(tree).map_err(|e| SimError::Config(format!("setting {path} = {label}: {e}")))
    }
}

fn set_path(tree: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| SimError::Config(format!("`{path}` does not name a config key")))?;
        if k + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(SimError::Config(format!("`{path}` does not name a config key")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*part)
            .ok_or_else(|| SimError::Config(format!("`{path}` does not name a config key")))?;
    }
    unreachable!("split yields at least one part")
}

/// Compact text for a parameter value in CSV cells and manifests.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
