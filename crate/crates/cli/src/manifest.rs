//! Run manifests: provenance, verdicts and artifact hashes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use groupwalk::EnvState;

use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisStatus {
    Completed,
    BudgetAborted,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub kind: String,
    pub status: AnalysisStatus,
    /// Named pass/fail checks of this analysis.
    pub verdicts: BTreeMap<String, bool>,
    pub artifacts: Vec<String>,
    /// Largest dropped mass over the stream terms the analysis used.
    pub dropped_mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl AnalysisOutcome {
    pub fn passed(&self) -> bool {
        self.status == AnalysisStatus::Completed && self.verdicts.values().all(|v| *v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// The configuration as run, with any seed override applied.
    pub config: ExperimentConfig,
    pub config_sha256: String,
    /// Directory that relative measure files resolve against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_dir: Option<PathBuf>,
    pub seed: u64,
    pub rng_algorithm: String,
    pub tool_version: String,
    pub workers: usize,
    pub budget_atoms: usize,
    pub environment_state: EnvState,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
    pub analyses: Vec<AnalysisOutcome>,
    /// Sum over analyses of their dropped mass.
    pub dropped_mass_total: f64,
    /// Artifact file name to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

/// Exit status: all verdicts pass.
pub const EXIT_PASS: i32 = 0;
/// Some analysis failed for a reason other than its budget.
pub const EXIT_ERROR: i32 = 1;
/// Some verdict failed.
pub const EXIT_VERDICT_FAILED: i32 = 2;
/// Some analysis hit its budget.
pub const EXIT_BUDGET: i32 = 3;
/// The configuration did not validate.
pub const EXIT_INVALID: i32 = 4;

impl ExperimentManifest {
    pub fn exit_code(&self) -> i32 {
        let statuses: Vec<AnalysisStatus> = self.analyses.iter().map(|a| a.status).collect();
        if statuses.contains(&AnalysisStatus::BudgetAborted) {
            EXIT_BUDGET
        } else if statuses.contains(&AnalysisStatus::Error) {
            EXIT_ERROR
        } else if self.analyses.iter().all(AnalysisOutcome::passed) {
            EXIT_PASS
        } else {
            EXIT_VERDICT_FAILED
        }
    }

    /// Artifacts written by ensemble analyses.
    pub fn ensemble_artifacts(&self) -> Vec<&str> {
        self.analyses
            .iter()
            .filter(|a| a.kind == "ensemble")
            .flat_map(|a| a.artifacts.iter().map(String::as_str))
            .filter(|f| f.ends_with(".csv"))
            .collect()
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}
