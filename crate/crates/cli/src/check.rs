//! `check fq`, `check fisher` and `check madelung`.

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use li_qt_core::inference::{fisher_dichotomic, DichotomicModel, Phase};
use li_qt_core::wave::madelung::DEFAULT_DENSITY_CUTOFF;
use li_qt_core::wave::{
    check_f_equals_q, check_madelung_extremum, evolve_tdse, fq_grid, gaussian_packet, wave_to_polar, EvolveOptions,
    MadelungReport, Potential,
};
use li_qt_core::{Grid, Params};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{resolve_seed, ConfigFile};
use crate::manifest::Sink;
use crate::Report;

#[derive(Debug, Subcommand)]
pub enum CheckCommand {
    /// Compare the inference functional F(P, S) with Q(ψ) on random fields.
    Fq(CheckFqArgs),
    /// Fisher information of cos(Kθ) against K².
    Fisher(CheckFisherArgs),
    /// Hydrodynamic residuals of evolved free packets under grid refinement.
    Madelung(CheckMadelungArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CheckFqArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest accepted |F-Q|/(|F|+|Q|).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckFq {
    pub trials: usize,
    pub seed: Option<u64>,
    pub tolerance: f64,
}

impl Default for CheckFq {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: None,
            tolerance: 1e-8,
        }
    }
}

pub fn resolve_fq(args: &CheckFqArgs, file: &ConfigFile) -> Result<CheckFq> {
    let mut cfg: CheckFq = file.overlay(&["check", "fq"], args)?;
    cfg.seed = Some(resolve_seed(cfg.seed, file)?);
    if cfg.trials == 0 {
        bail!("trials must be positive");
    }
    Ok(cfg)
}

pub fn fq(cfg: &CheckFq, sink: &mut Sink) -> Result<Report> {
    let seed = cfg.seed.unwrap_or_default();
    let r = check_f_equals_q(cfg.trials, seed, &fq_grid::<f64>())?;
    sink.json("fq.json", &r)?;
    let mut report = Report::new(serde_json::to_value(r)?, vec![seed]);
    if !(r.max_relative < cfg.tolerance) {
        report.violation = Some(format!(
            "max |F-Q|/(|F|+|Q|) = {:e} is not below {:e}",
            r.max_relative, cfg.tolerance
        ));
    }
    Ok(report)
}

#[derive(Debug, Args, Serialize)]
pub struct CheckFisherArgs {
    /// Winding numbers, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub windings: Option<Vec<u32>>,
    /// Angles per winding, midpoints of a uniform partition of [0, π].
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckFisher {
    pub windings: Vec<u32>,
    pub points: usize,
    pub tolerance: f64,
}

impl Default for CheckFisher {
    fn default() -> Self {
        Self {
            windings: vec![1, 2, 3],
            points: 1000,
            tolerance: 1e-9,
        }
    }
}

pub fn resolve_fisher(args: &CheckFisherArgs, file: &ConfigFile) -> Result<CheckFisher> {
    let cfg: CheckFisher = file.overlay(&["check", "fisher"], args)?;
    if cfg.windings.is_empty() || cfg.windings.contains(&0) || cfg.points == 0 {
        bail!("windings must be positive and points nonzero");
    }
    Ok(cfg)
}

pub fn fisher(cfg: &CheckFisher, sink: &mut Sink) -> Result<Report> {
    let mut rows = Vec::with_capacity(cfg.windings.len() * cfg.points);
    let mut per_winding = Vec::new();
    let mut worst = 0f64;
    for &k in &cfg.windings {
        let model = DichotomicModel::robust(k, Phase::Zero);
        let target = f64::from(k * k);
        let mut max_dev = 0f64;
        for i in 0..cfg.points {
            let theta = std::f64::consts::PI * (i as f64 + 0.5) / cfg.points as f64;
            let info = fisher_dichotomic(&model, theta)?;
            max_dev = max_dev.max((info - target).abs());
            rows.push(format!("{k},{theta},{info}"));
        }
        worst = worst.max(max_dev);
        per_winding.push(json!({ "winding": k, "expected": target, "max_deviation": max_dev }));
    }
    sink.csv("fisher.csv", "winding,theta,fisher", rows)?;
    let mut report = Report::new(json!({ "windings": per_winding, "max_deviation": worst }), Vec::new());
    if !(worst < cfg.tolerance) {
        report.violation = Some(format!("Fisher information deviates from K² by {worst:e}"));
    }
    Ok(report)
}

#[derive(Debug, Args, Serialize)]
pub struct CheckMadelungArgs {
    /// Points of the fine grid; the coarse grid has (n_x + 1)/2.
    #[arg(long)]
    pub n_x: Option<usize>,
    /// Time step of the fine run; the coarse run uses twice this.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Steps of the fine run.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub half_extent: Option<f64>,
    /// Largest accepted fine-grid continuity residual.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckMadelung {
    pub n_x: usize,
    pub dt: f64,
    pub steps: usize,
    pub half_extent: f64,
    pub x0: f64,
    pub sigma: f64,
    pub p0: f64,
    pub tolerance: f64,
    /// Accepted range of coarse/fine residual ratios (4 for second order).
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl Default for CheckMadelung {
    fn default() -> Self {
        Self {
            n_x: 513,
            dt: 0.02,
            steps: 50,
            half_extent: 10.0,
            x0: -1.0,
            sigma: 1.0,
            p0: 0.5,
            tolerance: 1e-4,
            min_ratio: 3.0,
            max_ratio: 5.0,
        }
    }
}

pub fn resolve_madelung(args: &CheckMadelungArgs, file: &ConfigFile) -> Result<CheckMadelung> {
    let cfg: CheckMadelung = file.overlay(&["check", "madelung"], args)?;
    if cfg.n_x.is_multiple_of(2) || !cfg.steps.is_multiple_of(2) || cfg.n_x < 33 || !(cfg.dt > 0.0) {
        bail!("n_x must be odd and at least 33, steps even, dt positive");
    }
    Ok(cfg)
}

/// Second-order stencils throughout, so the residuals expose the
/// discretization order.
fn free_run(cfg: &CheckMadelung, n_x: usize, dt: f64, steps: usize) -> Result<MadelungReport<f64>> {
    let grid = Grid::new(cfg.half_extent, n_x, dt, steps)?.with_orders(2, 2)?;
    let params = Params::natural(Potential::Free);
    let psi0 = gaussian_packet(&grid, cfg.x0, cfg.sigma, cfg.p0, params.hbar());
    let options = EvolveOptions {
        laplacian_order: 2,
        ..Default::default()
    };
    let traj = evolve_tdse(&psi0, &params, &grid, &options)?;
    let polar = wave_to_polar(&traj.field, params.lambda)?;
    Ok(check_madelung_extremum(
        &polar,
        &params,
        &traj.grid,
        DEFAULT_DENSITY_CUTOFF,
    )?)
}

pub fn madelung(cfg: &CheckMadelung, sink: &mut Sink) -> Result<Report> {
    let coarse = free_run(cfg, cfg.n_x.div_ceil(2), 2.0 * cfg.dt, cfg.steps / 2)?;
    let fine = free_run(cfg, cfg.n_x, cfg.dt, cfg.steps)?;
    let continuity_ratio = coarse.continuity_rms / fine.continuity_rms;
    let hj_ratio = coarse.hamilton_jacobi_rms / fine.hamilton_jacobi_rms;
    let result = json!({
        "coarse": coarse,
        "fine": fine,
        "continuity_ratio": continuity_ratio,
        "hamilton_jacobi_ratio": hj_ratio,
    });
    sink.json("madelung.json", &result)?;
    let mut report = Report::new(result, Vec::new());
    let range = cfg.min_ratio..=cfg.max_ratio;
    if !(fine.continuity_rms < cfg.tolerance) {
        report.violation = Some(format!(
            "continuity residual {:e} is not below {:e}",
            fine.continuity_rms, cfg.tolerance
        ));
    } else if !(range.contains(&continuity_ratio) && range.contains(&hj_ratio)) {
        report.violation = Some(format!(
            "refinement ratios {continuity_ratio:.3} and {hj_ratio:.3} outside [{}, {}]",
            cfg.min_ratio, cfg.max_ratio
        ));
    }
    Ok(report)
}
