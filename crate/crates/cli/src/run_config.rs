//! Training run files: a preset or inline architecture, optimizer settings
//! and the data source. Command-line flags override file values, which
//! override preset defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use scalewave::datasets::SyntheticTask;
use scalewave::models::{preset, ArchitectureConfig};
use scalewave::trainer::TrainConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base architecture; ignored when `model` is given.
    pub preset: Option<String>,
    pub model: Option<ArchitectureConfig>,
    pub train: TrainConfig,
    /// Synthetic task; the desk task when absent.
    pub task: Option<SyntheticTask>,
    /// JSONL manifest used instead of generating a task.
    pub manifest: Option<PathBuf>,
    pub data_seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            scalewave::Error::Config {
                field: path.display().to_string(),
                reason: e.to_string(),
            }
            .into()
        })
    }

    /// The architecture: inline model, else the named preset, else `desk-wnet`.
    pub fn architecture(&self) -> Result<ArchitectureConfig> {
        match (&self.model, &self.preset) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(p)) => Ok(preset(p)?),
            (None, None) => Ok(preset("desk-wnet")?),
        }
    }

    pub fn task(&self) -> SyntheticTask {
        self.task.clone().unwrap_or_else(SyntheticTask::desk)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
