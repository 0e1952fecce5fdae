//! Output collection and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDigest {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved configuration, replayable as is.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub timestamp_utc: String,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: Self =
            serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))?;
        anyhow::ensure!(
            manifest.schema_version == MANIFEST_SCHEMA_VERSION,
            "manifest schema_version {} is not supported",
            manifest.schema_version
        );
        Ok(manifest)
    }

    /// Recomputes every digest under `dir`; returns the paths that differ or
    /// are missing.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| sha256_file(&dir.join(&o.path)).map_or(true, |d| d != o.sha256))
            .map(|o| o.path.clone())
            .collect()
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Where a command puts its files. Without a directory nothing is written.
#[derive(Debug, Default)]
pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            written: Vec::new(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn is_active(&self) -> bool {
        self.dir.is_some()
    }

    /// Runs `write` on the full path of `name` and records it.
    pub fn write<E>(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<(), E>) -> Result<()>
    where
        E: Into<anyhow::Error>,
    {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(name);
        write(&path)
            .map_err(Into::into)
            .with_context(|| format!("writing {}", path.display()))?;
        self.record(name);
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, |p| -> Result<()> {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            fs::write(p, text)?;
            Ok(())
        })
    }

    /// Header plus one line per row.
    pub fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
        self.write(name, |p| -> Result<()> {
            let mut text = String::from(header);
            text.push('\n');
            for row in rows {
                text.push_str(&row);
                text.push('\n');
            }
            fs::write(p, text)?;
            Ok(())
        })
    }

    pub fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_owned());
        }
    }

    pub fn digests(&self) -> Result<Vec<OutputDigest>> {
        let Some(dir) = &self.dir else { return Ok(Vec::new()) };
        let mut names = self.written.clone();
        names.sort();
        names
            .into_iter()
            .map(|path| {
                let sha256 = sha256_file(&dir.join(&path))?;
                Ok(OutputDigest { path, sha256 })
            })
            .collect()
    }
}
