//! `sg run` and `sg fit`.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use li_qt_core::inference::DichotomicModel;
use li_qt_core::io::{save_event_log, write_sg_observations, LoadedEvents};
use li_qt_core::separation::SgObservation;
use li_qt_core::sg::{
    estimate_expectation, fit_robust_solution_with_errors, sample_sg_signed, theta_grid, Sign, DEFAULT_K_MAX,
    DEFAULT_THETA_POINTS,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{at_angle, collect_logs, parse_sign, sigma_distance, Vec3};
use crate::config::{resolve_seed, ConfigFile};
use crate::manifest::Sink;
use crate::Report;

#[derive(Debug, Subcommand)]
pub enum SgCommand {
    /// Simulate event logs for one or more analyzer settings.
    Run(SgRunArgs),
    /// Fit the robust solution to the logs in a directory.
    Fit(SgFitArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SgRunArgs {
    /// Events per setting.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Single angle between `a` and `m` (radians).
    #[arg(long, conflicts_with_all = ["theta_grid", "a"])]
    pub theta: Option<f64>,
    /// Number of uniform angles on [0, π] (default 16).
    #[arg(long, conflicts_with = "a")]
    pub theta_grid: Option<usize>,
    /// Explicit analyzer direction `x,y,z`.
    #[arg(long)]
    pub a: Option<Vec3>,
    /// Magnetic moment direction `x,y,z` (default z).
    #[arg(long)]
    pub m: Option<Vec3>,
    /// Detector labelling: `+` gives (1 + x a·m)/2, `-` the relabelled case.
    #[arg(long, value_parser = parse_sign, allow_hyphen_values = true)]
    pub sign: Option<Sign>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgRun {
    pub n: usize,
    pub seed: Option<u64>,
    pub theta: Option<f64>,
    pub theta_grid: Option<usize>,
    pub a: Option<Vec3>,
    pub m: Vec3,
    pub sign: Sign,
}

impl Default for SgRun {
    fn default() -> Self {
        Self {
            n: 10_000,
            seed: None,
            theta: None,
            theta_grid: None,
            a: None,
            m: Vec3::Z,
            sign: Sign::Plus,
        }
    }
}

pub fn resolve_run(args: &SgRunArgs, file: &ConfigFile) -> Result<SgRun> {
    let mut cfg: SgRun = file.overlay(&["sg", "run"], args)?;
    cfg.seed = Some(resolve_seed(cfg.seed, file)?);
    let chosen = [cfg.theta.is_some(), cfg.theta_grid.is_some(), cfg.a.is_some()];
    match chosen.iter().filter(|&&c| c).count() {
        0 => cfg.theta_grid = Some(DEFAULT_THETA_POINTS),
        1 => {}
        _ => bail!("give only one of theta, theta_grid and a"),
    }
    if cfg.n < 2 {
        bail!("n must be at least 2");
    }
    if cfg.theta_grid == Some(0) {
        bail!("theta_grid must be positive");
    }
    Ok(cfg)
}

pub fn run(cfg: &SgRun, sink: &mut Sink) -> Result<Report> {
    let seed = cfg.seed.unwrap_or_default();
    let m = cfg.m.unit()?;
    let settings = match (cfg.a, cfg.theta, cfg.theta_grid) {
        (Some(a), _, _) => vec![a.unit()?],
        (None, Some(theta), _) => vec![at_angle(&m, theta)?],
        (None, None, n) => theta_grid::<f64>(n.unwrap_or(DEFAULT_THETA_POINTS))
            .into_iter()
            .map(|t| at_angle(&m, t))
            .collect::<Result<_>>()?,
    };
    let single = settings.len() == 1;
    let mut seeds = Vec::with_capacity(settings.len());
    let mut rows = Vec::with_capacity(settings.len());
    let mut max_sigma = 0f64;
    let mut first = None;
    for (i, a) in settings.iter().enumerate() {
        let s = seed.wrapping_add(i as u64);
        seeds.push(s);
        let log = sample_sg_signed(a, &m, cfg.n, cfg.sign, s);
        let name = if single {
            "events.csv".to_owned()
        } else {
            format!("events_{i:02}.csv")
        };
        sink.write(&name, |p| save_event_log(&log, p))?;
        sink.record(&name.replace(".csv", ".json"));
        let (e, se) = estimate_expectation(&log)?;
        let predicted = cfg.sign.as_real::<f64>() * a.dot(&m);
        let sigma = sigma_distance(e, predicted, se);
        max_sigma = max_sigma.max(sigma);
        first.get_or_insert((e, se));
        rows.push(format!(
            "{name},{},{},{e},{se},{predicted},{sigma}",
            log.theta(),
            log.len()
        ));
    }
    sink.csv("expectations.csv", "file,theta,n,e_hat,stderr,predicted,sigma", rows)?;
    let mut summary = json!({
        "settings": settings.len(),
        "events_per_setting": cfg.n,
        "max_sigma": max_sigma,
    });
    if let (true, Some((e, se))) = (single, first) {
        summary["e_hat"] = json!(e);
        summary["stderr"] = json!(se);
    }
    Ok(Report::new(summary, seeds))
}

#[derive(Debug, Args, Serialize)]
pub struct SgFitArgs {
    /// Directory of `sg run` logs (or a single log).
    pub logdir: Option<PathBuf>,
    /// Largest winding number tried.
    #[arg(long)]
    pub k_max: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgFit {
    pub logdir: Option<PathBuf>,
    pub k_max: u32,
}

impl Default for SgFit {
    fn default() -> Self {
        Self {
            logdir: None,
            k_max: DEFAULT_K_MAX,
        }
    }
}

pub fn resolve_fit(args: &SgFitArgs, file: &ConfigFile) -> Result<SgFit> {
    let cfg: SgFit = file.overlay(&["sg", "fit"], args)?;
    if cfg.logdir.is_none() {
        bail!("a log directory is required");
    }
    if cfg.k_max == 0 {
        bail!("k_max must be positive");
    }
    Ok(cfg)
}

pub const FIT_CURVE_POINTS: usize = 181;

pub fn fit(cfg: &SgFit, sink: &mut Sink) -> Result<Report> {
    let Some(dir) = &cfg.logdir else {
        bail!("a log directory is required")
    };
    let mut thetas = Vec::new();
    let mut e_hats = Vec::new();
    let mut stderrs = Vec::new();
    let mut observations = Vec::new();
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    for (name, loaded) in collect_logs(dir)? {
        let LoadedEvents::Sg(log) = loaded else { continue };
        let (e, se) = estimate_expectation(&log)?;
        rows.push(format!("{name},{},{},{e},{se}", log.theta(), log.len()));
        thetas.push(log.theta());
        e_hats.push(e);
        stderrs.push(se);
        seeds.push(log.seed());
        observations.push(SgObservation {
            a: *log.a(),
            m: *log.m_direction(),
            mean_x: e,
            n: Some(log.len() as u64),
        });
    }
    if thetas.is_empty() {
        bail!("no Stern-Gerlach logs in {}", dir.display());
    }
    let result = fit_robust_solution_with_errors(&thetas, &e_hats, &stderrs, cfg.k_max)?;
    sink.csv("expectations.csv", "file,theta,n,e_hat,stderr", rows)?;
    sink.write("observations.csv", |p| write_sg_observations(&observations, p))?;
    sink.json("fit.json", &result)?;
    let model: DichotomicModel<f64> = result.model();
    let curve = (0..FIT_CURVE_POINTS).map(|i| {
        let t = std::f64::consts::PI * i as f64 / (FIT_CURVE_POINTS - 1) as f64;
        format!("{t},{}", model.expectation(t))
    });
    sink.csv("fit_curve.csv", "theta,expectation", curve)?;
    let summary = json!({
        "logs": thetas.len(),
        "winding": result.winding,
        "phase": result.phase,
        "residual": result.residual,
        "fisher": result.fisher,
    });
    Ok(Report::new(summary, seeds))
}
