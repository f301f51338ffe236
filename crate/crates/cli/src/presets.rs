//! The built-in experiment registry. Each preset is an ordinary config file
//! compiled into the binary; `meta.inferred` lists the keys whose values are
//! choices made here rather than quoted settings.

use crate::config::{apply_override, parse_flat, ExperimentConfig, Flat};
use crate::error::{CliError, Result};

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../presets/", $name, ".toml")))),*]
    };
}

pub const PRESETS: &[(&str, &str)] = presets![
    "test1",
    "test2",
    "test3",
    "test4",
    "test5_sub",
    "test5_super",
    "test6_sub_chemo",
    "test6_super_chemo",
    "test6_damping",
    "test7",
    "test7_chemo",
    "test7_damping",
    "test8",
    "test9",
    "test9_damping",
    "test10",
    "test11",
    "test11_opt",
    "test12",
    "test12_opt",
    "test13",
    "test13_opt",
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| CliError::UnknownPreset(name.to_string()))
}

pub fn flat(name: &str) -> Result<Flat> {
    parse_flat(source(name)?, &format!("preset {name}"))
}

/// Resolves a preset with `key=value` overrides applied on top.
pub fn load(name: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut map = flat(name)?;
    for o in overrides {
        apply_override(&mut map, o)?;
    }
    ExperimentConfig::from_flat(map, name, None)
}
