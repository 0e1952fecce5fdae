//! TOML run configuration. Every command reads its own section
//! (`[sg.run]`, `[check.fq]`, `[evolve]`, ...); flags override file values.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const CONFIG_SCHEMA_VERSION: i64 = 1;

/// Environment fallback for `--seed`.
pub const SEED_ENV: &str = "LI_QT_SEED";

const SECTIONS: &[(&str, &[&str])] = &[
    ("sg", &["run", "fit"]),
    ("eprb", &["run", "report", "test"]),
    ("separate", &["sg", "eprb"]),
    ("check", &["fq", "fisher", "madelung"]),
    ("evolve", &[]),
];

/// Parsed and schema-checked configuration file.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().context("config is not valid TOML")?;
        match table.get("schema_version").and_then(toml::Value::as_integer) {
            Some(CONFIG_SCHEMA_VERSION) => {}
            Some(v) => bail!("config schema_version {v} is not supported (expected {CONFIG_SCHEMA_VERSION})"),
            None => bail!("config must set schema_version = {CONFIG_SCHEMA_VERSION}"),
        }
        for (key, value) in &table {
            match key.as_str() {
                "schema_version" => {}
                "seed" => {
                    if value.as_integer().is_none_or(|v| v < 0) {
                        bail!("config seed must be a non-negative integer");
                    }
                }
                other => {
                    let Some((_, subs)) = SECTIONS.iter().find(|(name, _)| *name == other) else {
                        bail!("unknown config key `{other}`");
                    };
                    if !subs.is_empty() {
                        let inner = value.as_table().with_context(|| format!("`{other}` must be a table"))?;
                        if let Some(bad) = inner.keys().find(|k| !subs.contains(&k.as_str())) {
                            bail!("unknown config section `{other}.{bad}`");
                        }
                    }
                }
            }
        }
        Ok(Self { table })
    }

    pub fn seed(&self) -> Option<u64> {
        self.table
            .get("seed")
            .and_then(toml::Value::as_integer)
            .map(|v| v as u64)
    }

    fn section(&self, path: &[&str]) -> Option<&toml::Value> {
        let mut value = self.table.get(path[0])?;
        for key in &path[1..] {
            value = value.get(key)?;
        }
        Some(value)
    }

    /// Flag values over file values over the defaults of `R`. Unknown keys in
    /// the section are rejected.
    pub fn overlay<A: Serialize, R: DeserializeOwned>(&self, path: &[&str], flags: &A) -> Result<R> {
        let mut merged = match self.section(path) {
            Some(v) => {
                let value = serde_json::to_value(v)?;
                // Validate the section on its own so errors name the file.
                serde_json::from_value::<R>(value.clone())
                    .with_context(|| format!("config section [{}]", path.join(".")))?;
                value
            }
            None => serde_json::json!({}),
        };
        let flags = serde_json::to_value(flags)?;
        let (Some(target), Some(source)) = (merged.as_object_mut(), flags.as_object()) else {
            bail!("configuration section [{}] must be a table", path.join("."));
        };
        for (key, value) in source {
            if !value.is_null() {
                target.insert(key.clone(), value.clone());
            }
        }
        Ok(serde_json::from_value(merged)?)
    }
}

/// Flag, then config section, then the file's top-level seed, then the
/// environment, then zero.
pub fn resolve_seed(flag: Option<u64>, file: &ConfigFile) -> Result<u64> {
    if let Some(seed) = flag.or(file.seed()) {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={text:?} is not a non-negative integer")),
        Err(_) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Args {
        n: Option<u64>,
        theta: Option<f64>,
    }

    #[test]
    fn flags_override_file() {
        let file = ConfigFile::parse("schema_version = 1\n[sg.run]\nn = 5\ntheta = 0.5\n").unwrap();
        let merged: Args = file
            .overlay(
                &["sg", "run"],
                &Args {
                    n: Some(9),
                    theta: None,
                },
            )
            .unwrap();
        assert_eq!(
            merged,
            Args {
                n: Some(9),
                theta: Some(0.5)
            }
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigFile::parse("schema_version = 1\nbogus = 3\n").is_err());
        assert!(ConfigFile::parse("schema_version = 1\n[sg.walk]\n").is_err());
        assert!(ConfigFile::parse("[sg.run]\nn = 1\n").is_err());
        let file = ConfigFile::parse("schema_version = 1\n[sg.run]\nn = 5\nspeed = 2\n").unwrap();
        assert!(file.overlay::<_, Args>(&["sg", "run"], &Args::default()).is_err());
    }

    #[test]
    fn seed_precedence() {
        let file = ConfigFile::parse("schema_version = 1\nseed = 11\n").unwrap();
        assert_eq!(resolve_seed(Some(3), &file).unwrap(), 3);
        assert_eq!(resolve_seed(None, &file).unwrap(), 11);
    }
}
