//! Run manifests: every command writes one before computing anything, and
//! `rerun` re-executes a recorded run to reproduce its outputs byte for byte.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Full resolved configuration of the run.
    pub config: Value,
}

impl RunManifest {
    pub fn new<C: Serialize>(
        command: &str,
        seed: u64,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        config: &C,
    ) -> Result<Self> {
        Ok(RunManifest {
            schema: "manifest-v1".into(),
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            inputs,
            outputs,
            config: serde_json::to_value(config)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        if manifest.schema != "manifest-v1" {
            bail!("unsupported manifest schema `{}`", manifest.schema);
        }
        Ok(manifest)
    }
}

/// Manifest path for a single-file output: `foo.json` -> `foo.manifest.json`.
pub fn manifest_for_file(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}
