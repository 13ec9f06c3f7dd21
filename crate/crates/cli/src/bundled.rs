//! Configurations shipped with the binary.

use crate::config::ExperimentConfig;

/// `(name, json)` for every bundled configuration.
pub const BUNDLED: &[(&str, &str)] = &[
    ("z-parity", include_str!("../configs/z-parity.json")),
    ("z-lazy", include_str!("../configs/z-lazy.json")),
    ("heis-nilpotent", include_str!("../configs/heis-nilpotent.json")),
    ("f2-srw", include_str!("../configs/f2-srw.json")),
    ("f2-markov-env", include_str!("../configs/f2-markov-env.json")),
    ("f2-periodic", include_str!("../configs/f2-periodic.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Option<ExperimentConfig> {
    source(name).map(|s| ExperimentConfig::from_json(s).expect("bundled configs parse"))
}
