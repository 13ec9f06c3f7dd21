//! JSON description of an environment.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{EnvironmentKind, EnvironmentModel};
use crate::error::{Error, Result};
use crate::group::GroupModel;
use crate::measure::SparseMeasure;

/// One entry of the measure table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSource {
    /// `[["a", 0.25], ["A", 0.25], ...]`
    Atoms { atoms: Vec<(String, f64)> },
    /// Inline CSV block with an `element,mass` header.
    Csv { csv: String },
    /// CSV file, relative paths resolved against the spec's directory.
    File { file: PathBuf },
    /// `simple_random_walk` (uniform on generators) or `lazy` (holds with
    /// probability `hold`, otherwise a uniform generator step).
    Preset {
        preset: String,
        #[serde(default)]
        hold: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(flatten)]
    pub kind: EnvironmentKind,
    pub measures: Vec<MeasureSource>,
    /// Optional fixed environment seed; otherwise derived from the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MeasureSource {
    pub fn resolve(&self, group: &Arc<GroupModel>, base_dir: &Path) -> Result<SparseMeasure> {
        match self {
            MeasureSource::Atoms { atoms } => {
                let parsed = atoms
                    .iter()
                    .map(|(g, p)| Ok((group.parse_element(g)?, *p)))
                    .collect::<Result<Vec<_>>>()?;
                SparseMeasure::new(group.clone(), parsed)
            }
            MeasureSource::Csv { csv } => SparseMeasure::read_csv(group.clone(), csv.as_bytes()),
            MeasureSource::File { file } => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    base_dir.join(file)
                };
                SparseMeasure::read_csv(group.clone(), std::fs::File::open(&path)?)
            }
            MeasureSource::Preset { preset, hold } => {
                let srw = SparseMeasure::simple_random_walk(group.clone());
                match preset.as_str() {
                    "simple_random_walk" => Ok(srw),
                    "lazy" => {
                        if !(0.0..1.0).contains(hold) {
                            return Err(Error::InvalidArgument(format!(
                                "hold probability {hold} outside [0, 1)"
                            )));
                        }
                        let atoms = srw
                            .iter()
                            .map(|(g, p)| (g.clone(), p * (1.0 - hold)))
                            .chain([(group.identity(), *hold)]);
                        SparseMeasure::new(group.clone(), atoms)
                    }
                    other => Err(Error::InvalidArgument(format!("unknown measure preset {other:?}"))),
                }
            }
        }
    }
}

impl EnvironmentSpec {
    pub fn build(&self, group: &Arc<GroupModel>, base_dir: &Path) -> Result<EnvironmentModel> {
        let table = self
            .measures
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.resolve(group, base_dir)
                    .map_err(|e| Error::Environment(format!("measure {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        EnvironmentModel::new(self.kind.clone(), table)
    }
}
