//! Named scenarios shipped with the crate, one per reproduced figure or
//! table.

use std::path::Path;

use super::config::ScenarioConfig;
use crate::error::{Result, SimError};

const PRESETS: [(&str, &str); 20] = [
    ("baseline-small", include_str!("../../presets/baseline-small.toml")),
    ("baseline-main", include_str!("../../presets/baseline-main.toml")),
    ("fig2a", include_str!("../../presets/fig2a.toml")),
    ("fig2b", include_str!("../../presets/fig2b.toml")),
    ("fig2c", include_str!("../../presets/fig2c.toml")),
    ("fig2d", include_str!("../../presets/fig2d.toml")),
    ("fig3", include_str!("../../presets/fig3.toml")),
    ("fig4", include_str!("../../presets/fig4.toml")),
    ("fig5", include_str!("../../presets/fig5.toml")),
    ("table1", include_str!("../../presets/table1.toml")),
    ("figS1", include_str!("../../presets/figS1.toml")),
    ("figS2", include_str!("../../presets/figS2.toml")),
    ("figS3", include_str!("../../presets/figS3.toml")),
    ("figS4", include_str!("../../presets/figS4.toml")),
    ("figS5", include_str!("../../presets/figS5.toml")),
    ("figS6", include_str!("../../presets/figS6.toml")),
    ("figS7", include_str!("../../presets/figS7.toml")),
    ("figS8", include_str!("../../presets/figS8.toml")),
    ("figS9", include_str!("../../presets/figS9.toml")),
    ("size-robustness", include_str!("../../presets/size-robustness.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Raw TOML of a preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let text = preset_source(name).ok_or_else(|| SimError::UnknownPreset(name.to_string()))?;
    let cfg = ScenarioConfig::from_toml_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// A path to an existing file is loaded; anything else is looked up as a
/// preset name.
pub fn resolve_scenario(arg: &str) -> Result<ScenarioConfig> {
    let path = Path::new(arg);
    if path.is_file() {
        ScenarioConfig::load(path)
    } else if preset_source(arg).is_some() {
        preset(arg)
    } else if path.extension().is_some() || arg.contains(std::path::MAIN_SEPARATOR) {
        Err(SimError::Config(format!("scenario file {arg} does not exist")))
    } else {
        Err(SimError::UnknownPreset(arg.to_string()))
    }
}
