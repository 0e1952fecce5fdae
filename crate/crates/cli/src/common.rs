//! Argument value types shared by several commands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use li_qt_core::eprb::CorrelationSign;
use li_qt_core::io::{load_events, sidecar_path, LoadedEvents};
use li_qt_core::sg::Sign;
use li_qt_core::UnitVector;
use serde::{Deserialize, Serialize};

/// A direction given as `x,y,z` on the command line or `[x, y, z]` in TOML.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3(pub [f64; 3]);

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Self(v)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.0
    }
}

impl FromStr for Vec3 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [x, y, z] => Ok(Self([x, y, z])),
            _ => Err(format!("expected three comma-separated numbers, got `{s}`")),
        }
    }
}

impl Vec3 {
    pub const Z: Self = Self([0.0, 0.0, 1.0]);

    pub fn unit(self) -> Result<UnitVector> {
        UnitVector::try_from(self.0).with_context(|| format!("direction {:?}", self.0))
    }
}

/// Spatial grid as `L,N`: `N` points on `[-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GridSpec {
    pub half_extent: f64,
    pub n_x: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (l, n) = s.split_once(',').ok_or_else(|| format!("expected `L,N`, got `{s}`"))?;
        let half_extent = l.trim().parse().map_err(|e| format!("`{l}`: {e}"))?;
        let n_x = n.trim().parse().map_err(|e| format!("`{n}`: {e}"))?;
        Ok(Self { half_extent, n_x })
    }
}

impl TryFrom<String> for GridSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GridSpec> for String {
    fn from(g: GridSpec) -> Self {
        g.to_string()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.half_extent, self.n_x)
    }
}

pub fn parse_sign(s: &str) -> Result<Sign, String> {
    match s {
        "+" | "plus" | "+1" => Ok(Sign::Plus),
        "-" | "minus" | "-1" => Ok(Sign::Minus),
        _ => Err(format!("expected + or -, got `{s}`")),
    }
}

pub fn parse_correlation_sign(s: &str) -> Result<CorrelationSign, String> {
    match s {
        "-" | "minus" | "singlet" => Ok(CorrelationSign::Singlet),
        "+" | "plus" | "positive" => Ok(CorrelationSign::Positive),
        _ => Err(format!("expected + or -, got `{s}`")),
    }
}

/// Unit vector at angle `theta` from `m`. For `m = z` this is the x-z plane
/// direction `(sin θ, 0, cos θ)`.
pub fn at_angle(m: &UnitVector, theta: f64) -> Result<UnitVector> {
    let [mx, my, mz] = m.components();
    let e = if mx.abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let d = e[0] * mx + e[1] * my + e[2] * mz;
    let u = [e[0] - d * mx, e[1] - d * my, e[2] - d * mz];
    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let (s, c) = theta.sin_cos();
    Ok(UnitVector::new(
        c * mx + s * u[0] / norm,
        c * my + s * u[1] / norm,
        c * mz + s * u[2] / norm,
    )?)
}

/// `|observed - predicted| / stderr`, infinite for a nonzero deviation with
/// zero spread.
pub fn sigma_distance(observed: f64, predicted: f64, stderr: f64) -> f64 {
    let d = (observed - predicted).abs();
    if stderr > 0.0 {
        d / stderr
    } else if d <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Event logs in a file or directory (files with a sidecar, sorted by name).
pub fn collect_logs(input: &Path) -> Result<Vec<(String, LoadedEvents)>> {
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)
            .with_context(|| format!("listing {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv") && sidecar_path(p).exists())
            .collect();
        files.sort();
        files
    } else {
        vec![input.to_owned()]
    };
    let mut logs = Vec::with_capacity(files.len());
    for file in files {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        logs.push((name, load_events(&file)?));
    }
    if logs.is_empty() {
        bail!("no event logs found in {}", input.display());
    }
    Ok(logs)
}
