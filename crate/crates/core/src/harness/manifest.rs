//! Run manifests: what was run, with which configuration and seed.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::{Error, Result};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub trials: usize,
    pub outputs: Vec<String>,
    pub runtime_s: f64,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &ExperimentConfig,
        outputs: &[&Path],
        runtime_s: f64,
    ) -> Self {
        RunManifest {
            version: VERSION.to_string(),
            command: command.to_string(),
            seed: config.run.seed,
            trials: config.run.trials,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            runtime_s,
            config: config.clone(),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("manifest", e.to_string()))
    }

    /// Writes the manifest next to `output` as `<output>.manifest.toml`.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.toml");
        let path = PathBuf::from(name);
        std::fs::write(&path, self.to_toml_string()?)?;
        Ok(path)
    }
}
