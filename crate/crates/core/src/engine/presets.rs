//! Scenario presets shipped with the crate. Names are stable.

use std::path::Path;

use super::scenario::{Scenario, ScenarioFile};
use crate::error::{Error, Result};

/// `(name, TOML text)` for every preset, configuration presets first.
pub const PRESETS: &[(&str, &str)] = &[
    ("model-local-disk", include_str!("../../presets/model-local-disk.toml")),
    ("model-persistent", include_str!("../../presets/model-persistent.toml")),
    ("falkon-first-available", include_str!("../../presets/falkon-first-available.toml")),
    ("falkon-first-available-wrapper", include_str!("../../presets/falkon-first-available-wrapper.toml")),
    ("fca-locality0", include_str!("../../presets/fca-locality0.toml")),
    ("fca-locality100", include_str!("../../presets/fca-locality100.toml")),
    ("mcu-locality0", include_str!("../../presets/mcu-locality0.toml")),
    ("mcu-locality100", include_str!("../../presets/mcu-locality100.toml")),
    ("locality1_fit_128cpu", include_str!("../../presets/locality1_fit_128cpu.toml")),
    ("locality1.38_fit_128cpu", include_str!("../../presets/locality1.38_fit_128cpu.toml")),
    ("locality2_fit_128cpu", include_str!("../../presets/locality2_fit_128cpu.toml")),
    ("locality3_fit_128cpu", include_str!("../../presets/locality3_fit_128cpu.toml")),
    ("locality4_fit_128cpu", include_str!("../../presets/locality4_fit_128cpu.toml")),
    ("locality5_fit_128cpu", include_str!("../../presets/locality5_fit_128cpu.toml")),
    ("locality10_fit_128cpu", include_str!("../../presets/locality10_fit_128cpu.toml")),
    ("locality20_fit_128cpu", include_str!("../../presets/locality20_fit_128cpu.toml")),
    ("locality30_fit_128cpu", include_str!("../../presets/locality30_fit_128cpu.toml")),
    ("locality1_gz_128cpu", include_str!("../../presets/locality1_gz_128cpu.toml")),
    ("locality1.38_gz_128cpu", include_str!("../../presets/locality1.38_gz_128cpu.toml")),
    ("locality2_gz_128cpu", include_str!("../../presets/locality2_gz_128cpu.toml")),
    ("locality3_gz_128cpu", include_str!("../../presets/locality3_gz_128cpu.toml")),
    ("locality4_gz_128cpu", include_str!("../../presets/locality4_gz_128cpu.toml")),
    ("locality5_gz_128cpu", include_str!("../../presets/locality5_gz_128cpu.toml")),
    ("locality10_gz_128cpu", include_str!("../../presets/locality10_gz_128cpu.toml")),
    ("locality20_gz_128cpu", include_str!("../../presets/locality20_gz_128cpu.toml")),
    ("locality30_gz_128cpu", include_str!("../../presets/locality30_gz_128cpu.toml")),
    ("gpfs_fit_128cpu", include_str!("../../presets/gpfs_fit_128cpu.toml")),
    ("gpfs_gz_128cpu", include_str!("../../presets/gpfs_gz_128cpu.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Parses a preset by name.
pub fn preset(name: &str) -> Result<ScenarioFile> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::config(format!("unknown preset '{name}'")))?;
    ScenarioFile::from_toml_str(text)
}

impl Scenario {
    /// Builds a preset scenario. Presets never reference trace files.
    pub fn preset(name: &str) -> Result<Scenario> {
        preset(name)?.build(Path::new("."))
    }
}
