//! Configuration-driven experiments on random walks with random transition
//! probabilities: validation, execution, manifests and replay.

pub mod bundled;
pub mod config;
pub mod describe;
pub mod manifest;
pub mod run;

pub use config::{AnalysisSpec, ExperimentConfig, Prepared, SCHEMA_VERSION};
pub use manifest::{AnalysisOutcome, AnalysisStatus, ExperimentManifest};
pub use run::{replay, run_experiment, ReplayOutcome, RunError, RunOptions};
