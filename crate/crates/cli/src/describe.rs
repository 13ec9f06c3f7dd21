//! Catalog listing for `groupwalk describe`.

use std::fmt::Write;

use crate::bundled;

pub const GROUPS: &[(&str, &str)] = &[
    ("IntegerLattice(d)", "Z^d, elements written (x1,...,xd)"),
    ("Heisenberg", "discrete Heisenberg group, elements written (a,b,c)"),
    (
        "FreeGroup(r)",
        "free group on r generators, reduced words with inverses in capitals",
    ),
    ("CyclicQuotient(m)", "Z/mZ, elements written as integers"),
];

pub const ENVIRONMENTS: &[(&str, &str)] = &[
    ("frozen", "one step measure at every time"),
    ("iid", "symbols drawn independently with `probabilities`"),
    (
        "markov_base",
        "stationary Markov chain with `transition` and `stationary`",
    ),
    (
        "periodic_cycle",
        "rotation through the measure table from a uniform residue",
    ),
];

pub const ANALYSES: &[(&str, &str)] = &[
    ("growth", "ball sizes and exponential growth rate"),
    ("entropy", "entropy profile, h_k sequences, slope and SMB estimates"),
    ("tail", "translate defects, overlap subgroup generators, period"),
    ("invariance", "decay of tv(g mu, mu) on nilpotent groups"),
    ("ensemble", "sampled paths written as CSV"),
    ("escape", "rate of escape"),
    ("boundary", "limit ends, ray deviation, hitting measure, stationarity"),
    ("inequality", "h <= l v from the entropy, escape and growth results"),
    ("conditional", "conditional entropy over end cylinders"),
];

/// Stable text listing of groups, environments, analyses and bundled
/// configurations.
pub fn describe() -> String {
    let mut out = String::new();
    let mut section = |title: &str, rows: &mut dyn Iterator<Item = (String, String)>| {
        writeln!(out, "{title}:").unwrap();
        for (name, text) in rows {
            writeln!(out, "  {name:<20} {text}").unwrap();
        }
        writeln!(out).unwrap();
    };
    let pairs = |t: &'static [(&str, &str)]| t.iter().map(|(a, b)| (a.to_string(), b.to_string()));
    section("groups", &mut pairs(GROUPS));
    section("environments", &mut pairs(ENVIRONMENTS));
    section("analyses", &mut pairs(ANALYSES));
    let mut configs = bundled::names().map(|n| {
        let c = bundled::load(n).expect("listed");
        let kinds: Vec<&str> = c.analyses.iter().map(|a| a.name()).collect();
        (n.to_string(), format!("{} [{}]", c.description, kinds.join(", ")))
    });
    section("bundled configs", &mut configs);
    out
}
