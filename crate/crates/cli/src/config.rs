//! Experiment configuration files and their validation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use groupwalk::entropy::DeltaVerdict;
use groupwalk::env::EnvironmentSpec;
use groupwalk::walk::MAX_CYLINDER_DEPTH;
use groupwalk::{EnvironmentModel, GroupKind, GroupModel, SamplingMode};

/// Schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

fn default_paths() -> usize {
    10_000
}

fn default_windows() -> usize {
    1
}

fn default_trivial_threshold() -> f64 {
    0.05
}

fn default_radius_cap() -> u32 {
    4
}

fn default_vanish() -> f64 {
    0.1
}

fn default_singular() -> f64 {
    1.9
}

fn default_mode() -> SamplingMode {
    SamplingMode::Quenched
}

fn default_depth() -> usize {
    2
}

fn default_min_stabilized() -> f64 {
    0.99
}

fn default_residual_n() -> usize {
    200
}

fn default_max_residual() -> f64 {
    0.03
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisSpec {
    Growth {
        t_max: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_v: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_degree: Option<[f64; 2]>,
    },
    Entropy {
        n_max: usize,
        #[serde(default = "default_paths")]
        paths: usize,
        #[serde(default)]
        prune_eps: f64,
        #[serde(default)]
        h_k: Vec<usize>,
        /// Orbit windows for the headline estimate; 1 uses ω alone.
        #[serde(default = "default_windows")]
        windows: usize,
        #[serde(default = "default_trivial_threshold")]
        trivial_threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_trivial: Option<bool>,
        /// Upper bound for the final value of every requested `h_k`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h_k_max: Option<f64>,
    },
    Tail {
        n_max: usize,
        #[serde(default = "default_radius_cap")]
        radius_cap: u32,
        #[serde(default = "default_vanish")]
        vanish: f64,
        #[serde(default = "default_singular")]
        singular: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elements: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        expect: BTreeMap<String, DeltaVerdict>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_period: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_gcd: Option<i64>,
    },
    Invariance {
        checkpoints: Vec<usize>,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elements: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_factor: Option<f64>,
    },
    Ensemble {
        n: usize,
        paths: usize,
        #[serde(default = "default_mode")]
        mode: SamplingMode,
    },
    Escape {
        n: usize,
        #[serde(default = "default_paths")]
        paths: usize,
        #[serde(default = "default_mode")]
        mode: SamplingMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_l: Option<[f64; 2]>,
    },
    Boundary {
        n: usize,
        #[serde(default = "default_paths")]
        paths: usize,
        /// Rate of escape; taken from the escape analysis when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l: Option<f64>,
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default = "default_min_stabilized")]
        min_stabilized: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        residual_paths: Option<usize>,
        #[serde(default = "default_residual_n")]
        residual_n: usize,
        #[serde(default = "default_max_residual")]
        max_residual: f64,
    },
    Inequality {},
    Conditional {
        depths: Vec<usize>,
        n: usize,
        horizon: usize,
        #[serde(default = "default_paths")]
        paths: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_ratio: Option<f64>,
    },
}

impl AnalysisSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisSpec::Growth { .. } => "growth",
            AnalysisSpec::Entropy { .. } => "entropy",
            AnalysisSpec::Tail { .. } => "tail",
            AnalysisSpec::Invariance { .. } => "invariance",
            AnalysisSpec::Ensemble { .. } => "ensemble",
            AnalysisSpec::Escape { .. } => "escape",
            AnalysisSpec::Boundary { .. } => "boundary",
            AnalysisSpec::Inequality {} => "inequality",
            AnalysisSpec::Conditional { .. } => "conditional",
        }
    }

    /// Position in the execution order.
    pub fn stage(&self) -> u8 {
        match self {
            AnalysisSpec::Growth { .. } => 0,
            AnalysisSpec::Entropy { .. } | AnalysisSpec::Tail { .. } | AnalysisSpec::Invariance { .. } => 1,
            AnalysisSpec::Ensemble { .. } => 2,
            AnalysisSpec::Escape { .. } => 3,
            AnalysisSpec::Boundary { .. } => 4,
            AnalysisSpec::Inequality {} => 5,
            AnalysisSpec::Conditional { .. } => 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Group tag such as `FreeGroup(2)` or `Heisenberg`.
    pub group: String,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub analyses: Vec<AnalysisSpec>,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// A validated configuration with its built model.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub group: Arc<GroupModel>,
    pub env: EnvironmentModel,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, Vec<String>> {
        serde_json::from_str(text).map_err(|e| vec![format!("config does not parse: {e}")])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked before running and returns the
    /// built model, or every problem found.
    pub fn prepare(&self, base_dir: &Path) -> Result<Prepared, Vec<String>> {
        let mut errors = Vec::new();
        if self.schema != SCHEMA_VERSION {
            errors.push(format!(
                "schema {} is not supported (expected {SCHEMA_VERSION})",
                self.schema
            ));
        }
        if self.name.trim().is_empty() {
            errors.push("name is empty".into());
        }
        if self.seed.is_none() {
            errors.push("seed is missing".into());
        }
        let group = match GroupKind::parse_tag(&self.group).and_then(GroupModel::new) {
            Ok(g) => Some(Arc::new(g)),
            Err(e) => {
                errors.push(format!("group: {e}"));
                None
            }
        };
        let env = group.as_ref().and_then(|g| match self.environment.build(g, base_dir) {
            Ok(env) => Some(env),
            Err(e) => {
                errors.push(format!("environment: {e}"));
                None
            }
        });
        let kind = group.as_ref().map(|g| g.kind());
        let mut seen = BTreeMap::new();
        for (i, a) in self.analyses.iter().enumerate() {
            if let Some(j) = seen.insert(a.name(), i) {
                errors.push(format!(
                    "analyses[{i}]: {} already requested at analyses[{j}]",
                    a.name()
                ));
            }
            for e in check_analysis(a, kind, group.as_deref()) {
                errors.push(format!("analyses[{i}] ({}): {e}", a.name()));
            }
        }
        if seen.contains_key("inequality") {
            for need in ["entropy", "escape", "growth"] {
                if !seen.contains_key(need) {
                    errors.push(format!("inequality needs the {need} analysis"));
                }
            }
        }
        match (errors.is_empty(), group, env, self.seed) {
            (true, Some(group), Some(env), Some(seed)) => Ok(Prepared {
                config: self.clone(),
                group,
                env,
                seed,
            }),
            _ => Err(errors),
        }
    }
}

fn positive(errors: &mut Vec<String>, what: &str, v: usize) {
    if v == 0 {
        errors.push(format!("{what} must be positive"));
    }
}

fn positive_f(errors: &mut Vec<String>, what: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errors.push(format!("{what} must be positive, got {v}"));
    }
}

fn check_range(errors: &mut Vec<String>, what: &str, range: &Option<[f64; 2]>) {
    if let Some([lo, hi]) = range {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            errors.push(format!("{what} range [{lo}, {hi}] is empty"));
        }
    }
}

fn check_elements(errors: &mut Vec<String>, group: Option<&GroupModel>, elements: &Option<Vec<String>>) {
    if let (Some(g), Some(list)) = (group, elements) {
        for s in list {
            if let Err(e) = g.parse_element(s) {
                errors.push(format!("element {s:?}: {e}"));
            }
        }
    }
}

fn check_analysis(a: &AnalysisSpec, kind: Option<GroupKind>, group: Option<&GroupModel>) -> Vec<String> {
    let mut errors = Vec::new();
    let free = kind.map(|k| matches!(k, GroupKind::FreeGroup { .. }));
    match a {
        AnalysisSpec::Growth {
            t_max,
            expect_v,
            expect_degree,
        } => {
            if *t_max < 4 {
                errors.push("t_max must be at least 4".into());
            }
            check_range(&mut errors, "expect_v", expect_v);
            check_range(&mut errors, "expect_degree", expect_degree);
        }
        AnalysisSpec::Entropy {
            n_max,
            paths,
            prune_eps,
            h_k,
            windows,
            trivial_threshold,
            h_k_max,
            ..
        } => {
            if let Some(m) = h_k_max {
                positive_f(&mut errors, "h_k_max", *m);
            }
            if *n_max < 8 {
                errors.push("n_max must be at least 8".into());
            }
            positive(&mut errors, "paths", *paths);
            positive(&mut errors, "windows", *windows);
            positive_f(&mut errors, "trivial_threshold", *trivial_threshold);
            if !(0.0..=0.01).contains(prune_eps) {
                errors.push(format!("prune_eps {prune_eps} outside [0, 0.01]"));
            }
            if let Some(k) = h_k.iter().find(|&&k| k >= *n_max) {
                errors.push(format!("h_k index {k} must be below n_max"));
            }
        }
        AnalysisSpec::Tail {
            n_max,
            vanish,
            singular,
            elements,
            ..
        } => {
            positive(&mut errors, "n_max", *n_max);
            positive_f(&mut errors, "vanish", *vanish);
            positive_f(&mut errors, "singular", *singular);
            if vanish >= singular || *singular > 2.0 {
                errors.push(format!(
                    "thresholds need 0 < vanish < singular ≤ 2, got {vanish} and {singular}"
                ));
            }
            check_elements(&mut errors, group, elements);
        }
        AnalysisSpec::Invariance {
            checkpoints,
            threshold,
            elements,
            min_factor,
        } => {
            if checkpoints.is_empty() {
                errors.push("checkpoints are empty".into());
            }
            if !checkpoints.windows(2).all(|w| w[0] < w[1]) {
                errors.push("checkpoints must increase".into());
            }
            positive_f(&mut errors, "threshold", *threshold);
            if let Some(f) = min_factor {
                positive_f(&mut errors, "min_factor", *f);
            }
            if kind.is_some_and(|k| !k.is_nilpotent()) {
                errors.push("invariance decay needs a nilpotent group".into());
            }
            check_elements(&mut errors, group, elements);
        }
        AnalysisSpec::Ensemble { n, paths, .. } => {
            positive(&mut errors, "n", *n);
            positive(&mut errors, "paths", *paths);
        }
        AnalysisSpec::Escape { n, paths, expect_l, .. } => {
            positive(&mut errors, "n", *n);
            positive(&mut errors, "paths", *paths);
            check_range(&mut errors, "expect_l", expect_l);
        }
        AnalysisSpec::Boundary {
            n,
            paths,
            l,
            depth,
            min_stabilized,
            residual_paths,
            residual_n,
            max_residual,
        } => {
            positive(&mut errors, "n", *n);
            positive(&mut errors, "paths", *paths);
            positive(&mut errors, "depth", *depth);
            positive(&mut errors, "residual_n", *residual_n);
            positive_f(&mut errors, "min_stabilized", *min_stabilized);
            positive_f(&mut errors, "max_residual", *max_residual);
            if let Some(l) = l {
                positive_f(&mut errors, "l", *l);
            }
            if let Some(p) = residual_paths {
                positive(&mut errors, "residual_paths", *p);
            }
            if free == Some(false) {
                errors.push("boundary analysis needs a free group".into());
            }
        }
        AnalysisSpec::Inequality {} => {}
        AnalysisSpec::Conditional {
            depths,
            n,
            horizon,
            paths,
            max_ratio,
        } => {
            positive(&mut errors, "n", *n);
            positive(&mut errors, "paths", *paths);
            if depths.is_empty() {
                errors.push("depths are empty".into());
            }
            if let Some(d) = depths.iter().find(|&&d| d > MAX_CYLINDER_DEPTH) {
                errors.push(format!("depth {d} exceeds {MAX_CYLINDER_DEPTH}"));
            }
            let deepest = depths.iter().copied().max().unwrap_or(0);
            if *horizon < n + 10 * deepest {
                errors.push(format!(
                    "horizon {horizon} is below n + 10·depth = {}",
                    n + 10 * deepest
                ));
            }
            if let Some(r) = max_ratio {
                positive_f(&mut errors, "max_ratio", *r);
            }
            if free == Some(false) {
                errors.push("conditional entropy needs a free group".into());
            }
        }
    }
    errors
}
