//! Named experiment configs shipped with the crate.

use crate::config::ExperimentConfig;
use crate::{Error, Result};

pub const PRESETS: &[(&str, &str)] = &[
    (
        "ring8-admissibility",
        include_str!("../presets/ring8-admissibility.cfg"),
    ),
    (
        "ring8-d1000-cecl-k1",
        include_str!("../presets/ring8-d1000-cecl-k1.cfg"),
    ),
    (
        "ring8-d1000-cecl-k10",
        include_str!("../presets/ring8-d1000-cecl-k10.cfg"),
    ),
    (
        "ring8-d1000-ecl",
        include_str!("../presets/ring8-d1000-ecl.cfg"),
    ),
    (
        "ring8-hetero-cecl-k20",
        include_str!("../presets/ring8-hetero-cecl-k20.cfg"),
    ),
    (
        "ring8-hetero-gossip",
        include_str!("../presets/ring8-hetero-gossip.cfg"),
    ),
    (
        "ring8-kappa10-cecl-k96",
        include_str!("../presets/ring8-kappa10-cecl-k96.cfg"),
    ),
    (
        "ring8-kappa10-ecl",
        include_str!("../presets/ring8-kappa10-ecl.cfg"),
    ),
    (
        "two-node-trace",
        include_str!("../presets/two-node-trace.cfg"),
    ),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::InvalidArgument(format!(
                "unknown preset `{name}`; known: {}",
                known.join(", ")
            ))
        })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::parse(preset_text(name)?)
}
