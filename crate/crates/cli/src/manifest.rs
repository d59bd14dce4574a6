//! Run manifest: config snapshot, artifact checksums, versions and stage timings.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    /// Artifact file name to sha256 hex digest.
    pub artifacts: BTreeMap<String, String>,
    /// Stage-specific timings (per clusterer, training, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    /// Checksums of the input files.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    /// Loads the manifest in `dir`, or starts a fresh one. The config snapshot
    /// always reflects the latest invocation.
    pub fn open(dir: &Path, config: &RunConfig) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let mut m = if path.is_file() {
            let text = std::fs::read_to_string(&path)?;
            serde_json::from_str::<RunManifest>(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                config: config.clone(),
                inputs: BTreeMap::new(),
                stages: BTreeMap::new(),
            }
        };
        m.config = config.clone();
        m.version = env!("CARGO_PKG_VERSION").to_string();
        Ok(m)
    }

    pub fn record_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn record_stage(
        &mut self,
        stage: &str,
        seconds: f64,
        dir: &Path,
        files: &[&str],
        detail: BTreeMap<String, f64>,
    ) -> Result<()> {
        let mut artifacts = BTreeMap::new();
        for f in files {
            artifacts.insert(f.to_string(), sha256_file(&dir.join(f))?);
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                seconds,
                artifacts,
                detail,
            },
        );
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
