//! `evolve`: Crank-Nicolson integration of the linear evolution equation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use li_qt_core::io::write_snapshots;
use li_qt_core::wave::{energy, evolve_tdse, gaussian_packet, wave_to_polar, EvolveOptions, Potential};
use li_qt_core::{Grid, Params};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::GridSpec;
use crate::config::ConfigFile;
use crate::manifest::Sink;
use crate::Report;

#[derive(Debug, Args, Serialize)]
pub struct EvolveArgs {
    /// `harmonic`, `free` or `file:<path>` (CSV with columns `x,V`).
    #[arg(long)]
    pub potential: Option<String>,
    /// Oscillator frequency.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Oscillator center.
    #[arg(long)]
    pub center: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
    /// Inference parameter; ħ = 2/√λ.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// `L,N`: N points on [-L, L].
    #[arg(long)]
    pub grid: Option<GridSpec>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Write every `stride`-th step.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Initial packet center, width (standard deviation of |ψ|²) and momentum.
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// Accuracy order of the discrete Laplacian.
    #[arg(long)]
    pub laplacian_order: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evolve {
    pub potential: String,
    pub omega: f64,
    pub center: f64,
    pub mass: f64,
    pub lambda: f64,
    pub grid: GridSpec,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub x0: f64,
    /// Defaults to the oscillator ground-state width, or 1 otherwise.
    pub sigma: Option<f64>,
    pub p0: f64,
    pub laplacian_order: usize,
    /// Mass allowed within `boundary_cells` of a wall; `None` disables the check.
    pub boundary_mass: Option<f64>,
    pub boundary_cells: usize,
    pub norm_drift_limit: f64,
}

impl Default for Evolve {
    fn default() -> Self {
        let opts = EvolveOptions::default();
        Self {
            potential: "harmonic".into(),
            omega: 1.0,
            center: 0.0,
            mass: 1.0,
            lambda: 4.0,
            grid: GridSpec {
                half_extent: 10.0,
                n_x: 512,
            },
            dt: 0.005,
            steps: 2000,
            stride: 200,
            x0: 0.0,
            sigma: None,
            p0: 0.0,
            laplacian_order: opts.laplacian_order,
            boundary_mass: opts.boundary_mass,
            boundary_cells: opts.boundary_cells,
            norm_drift_limit: opts.norm_drift_limit,
        }
    }
}

enum PotentialSpec {
    Harmonic,
    Free,
    File(PathBuf),
}

fn potential_spec(s: &str) -> Result<PotentialSpec> {
    match s {
        "harmonic" => Ok(PotentialSpec::Harmonic),
        "free" => Ok(PotentialSpec::Free),
        _ => match s.strip_prefix("file:") {
            Some(path) if !path.is_empty() => Ok(PotentialSpec::File(path.into())),
            _ => bail!("potential must be harmonic, free or file:<path>, got `{s}`"),
        },
    }
}

pub fn resolve(args: &EvolveArgs, file: &ConfigFile) -> Result<Evolve> {
    let mut cfg: Evolve = file.overlay(&["evolve"], args)?;
    let spec = potential_spec(&cfg.potential)?;
    if !(cfg.mass > 0.0 && cfg.lambda > 0.0 && cfg.dt > 0.0) || cfg.stride == 0 || cfg.steps == 0 {
        bail!("mass, lambda, dt, steps and stride must be positive");
    }
    let hbar = 2.0 / cfg.lambda.sqrt();
    let sigma = *cfg.sigma.get_or_insert(match spec {
        PotentialSpec::Harmonic if cfg.omega > 0.0 => (hbar / (2.0 * cfg.mass * cfg.omega)).sqrt(),
        _ => 1.0,
    });
    if !(sigma > 0.0) {
        bail!("sigma must be positive");
    }
    Ok(cfg)
}

/// Linear interpolation of `x,V` rows onto the grid.
fn tabulated(path: &Path, grid: &Grid) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
    if header != ["x", "V"] {
        bail!("{}: expected header `x,V`", path.display());
    }
    let mut points = Vec::new();
    for (row, line) in lines.enumerate() {
        let mut parts = line.split(',').map(|p| p.trim().parse::<f64>());
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(x)), Some(Ok(v)), None) if x.is_finite() && v.is_finite() => points.push((x, v)),
            _ => bail!("{}: row {} is not `x,V`", path.display(), row + 1),
        }
    }
    if points.len() < 2 || points.windows(2).any(|w| w[1].0 <= w[0].0) {
        bail!("{}: need at least two rows with increasing x", path.display());
    }
    let (lo, hi) = (points[0].0, points[points.len() - 1].0);
    grid.xs()
        .into_iter()
        .map(|x| {
            if x < lo - 1e-12 || x > hi + 1e-12 {
                bail!(
                    "{}: grid point {x} outside tabulated range [{lo}, {hi}]",
                    path.display()
                );
            }
            let k = points.partition_point(|p| p.0 <= x).clamp(1, points.len() - 1);
            let ((x0, v0), (x1, v1)) = (points[k - 1], points[k]);
            Ok(v0 + (v1 - v0) * (x - x0) / (x1 - x0))
        })
        .collect()
}

pub fn run(cfg: &Evolve, sink: &mut Sink) -> Result<Report> {
    let grid = Grid::new(cfg.grid.half_extent, cfg.grid.n_x, cfg.dt, cfg.steps)?;
    let potential = match potential_spec(&cfg.potential)? {
        PotentialSpec::Harmonic => Potential::Harmonic {
            omega: cfg.omega,
            center: cfg.center,
        },
        PotentialSpec::Free => Potential::Free,
        PotentialSpec::File(path) => Potential::Tabulated(tabulated(&path, &grid)?),
    };
    let params = Params::new(cfg.mass, cfg.lambda, potential)?;
    let sigma = cfg.sigma.unwrap_or(1.0);
    let psi0 = gaussian_packet(&grid, cfg.x0, sigma, cfg.p0, params.hbar());
    let options = EvolveOptions {
        steps: Some(cfg.steps),
        stride: cfg.stride,
        laplacian_order: cfg.laplacian_order,
        boundary_mass: cfg.boundary_mass,
        boundary_cells: cfg.boundary_cells,
        norm_drift_limit: cfg.norm_drift_limit,
    };
    let traj = evolve_tdse(&psi0, &params, &grid, &options)?;
    let snaps = &traj.grid;
    if let Some(dir) = sink.dir().map(Path::to_owned) {
        let polar = wave_to_polar(&traj.field, params.lambda)?;
        for path in write_snapshots(&traj.field, &polar, snaps, &dir, "psi")? {
            if let Some(name) = path.file_name() {
                sink.record(&name.to_string_lossy());
            }
        }
    }
    let rows: Vec<String> = traj
        .times
        .iter()
        .enumerate()
        .map(|(tau, &t)| {
            let e = energy(traj.field.slice(tau), &params, snaps, cfg.laplacian_order, t);
            format!(
                "{t},{},{},{},{e}",
                traj.field.norm(snaps, tau),
                traj.field.mean_x(snaps, tau),
                traj.field.variance_x(snaps, tau)
            )
        })
        .collect();
    sink.csv("observables.csv", "t,norm,mean_x,variance_x,energy", rows)?;
    let last = traj.times.len() - 1;
    let summary = json!({
        "snapshots": traj.times.len(),
        "final_time": traj.times[last],
        "max_norm_drift": traj.max_norm_drift,
        "hbar": params.hbar(),
        "initial_energy": energy(traj.field.slice(0), &params, snaps, cfg.laplacian_order, traj.times[0]),
        "final_energy": energy(traj.field.slice(last), &params, snaps, cfg.laplacian_order, traj.times[last]),
        "final_mean_x": traj.field.mean_x(snaps, last),
        "final_variance_x": traj.field.variance_x(snaps, last),
    });
    Ok(Report::new(summary, Vec::new()))
}
