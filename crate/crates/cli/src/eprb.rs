//! `eprb run`, `eprb report` and `eprb test`.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use li_qt_core::eprb::{compliance_test, correlation_report, sample_eprb_signed, CorrelationSign};
use li_qt_core::io::{load_external_pairs, save_pair_log, sidecar_path, write_eprb_observations, LoadedEvents};
use li_qt_core::separation::EprbObservation;
use li_qt_core::sg::theta_grid;
use li_qt_core::{PairLog, UnitVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{collect_logs, parse_correlation_sign, sigma_distance, Vec3};
use crate::config::{resolve_seed, ConfigFile};
use crate::manifest::Sink;
use crate::Report;

pub const DEFAULT_EPRB_POINTS: usize = 12;

#[derive(Debug, Subcommand)]
pub enum EprbCommand {
    /// Simulate pair logs.
    Run(EprbRunArgs),
    /// Correlations and marginals of pair logs.
    Report(EprbReportArgs),
    /// 5σ compliance test of pair data against the predicted correlation.
    Test(EprbTestArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EprbRunArgs {
    /// Pairs per setting.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Single angle between the analyzers (radians); a1 = z.
    #[arg(long, conflicts_with_all = ["theta_grid", "a1", "a2"])]
    pub theta: Option<f64>,
    /// Number of uniform angles on [0, π] (default 12).
    #[arg(long, conflicts_with_all = ["a1", "a2"])]
    pub theta_grid: Option<usize>,
    #[arg(long, requires = "a2")]
    pub a1: Option<Vec3>,
    #[arg(long, requires = "a1")]
    pub a2: Option<Vec3>,
    /// `-` for <xy> = -a1·a2, `+` for the relabelled case.
    #[arg(long, value_parser = parse_correlation_sign, allow_hyphen_values = true)]
    pub correlation_sign: Option<CorrelationSign>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EprbRun {
    pub n: usize,
    pub seed: Option<u64>,
    pub theta: Option<f64>,
    pub theta_grid: Option<usize>,
    pub a1: Option<Vec3>,
    pub a2: Option<Vec3>,
    pub correlation_sign: CorrelationSign,
}

impl Default for EprbRun {
    fn default() -> Self {
        Self {
            n: 100_000,
            seed: None,
            theta: None,
            theta_grid: None,
            a1: None,
            a2: None,
            correlation_sign: CorrelationSign::Singlet,
        }
    }
}

pub fn resolve_run(args: &EprbRunArgs, file: &ConfigFile) -> Result<EprbRun> {
    let mut cfg: EprbRun = file.overlay(&["eprb", "run"], args)?;
    cfg.seed = Some(resolve_seed(cfg.seed, file)?);
    if cfg.a1.is_some() != cfg.a2.is_some() {
        bail!("a1 and a2 must be given together");
    }
    let chosen = [cfg.theta.is_some(), cfg.theta_grid.is_some(), cfg.a1.is_some()];
    match chosen.iter().filter(|&&c| c).count() {
        0 => cfg.theta_grid = Some(DEFAULT_EPRB_POINTS),
        1 => {}
        _ => bail!("give only one of theta, theta_grid and a1/a2"),
    }
    if cfg.n < 2 || cfg.theta_grid == Some(0) {
        bail!("n must be at least 2 and theta_grid positive");
    }
    Ok(cfg)
}

/// CSV row and the distance of `<xy>` from the prediction in standard errors.
fn correlation_row(name: &str, log: &PairLog, sign: CorrelationSign) -> Result<(String, f64)> {
    let r = correlation_report(log)?;
    let predicted = sign.as_real::<f64>() * log.a1().dot(log.a2());
    let sigma_xy = sigma_distance(r.xy_mean, predicted, r.stderr_xy);
    let root_n = (r.n as f64).sqrt();
    // Marginals have unit variance under the uniform hypothesis.
    let (sx, sy) = (r.x_mean.abs() * root_n, r.y_mean.abs() * root_n);
    let row = format!(
        "{name},{},{},{},{},{},{},{predicted},{sigma_xy},{sx},{sy}",
        log.theta(),
        r.n,
        r.xy_mean,
        r.stderr_xy,
        r.x_mean,
        r.y_mean
    );
    Ok((row, sigma_xy))
}

fn observation(log: &PairLog) -> Result<EprbObservation<f64>> {
    let r = correlation_report(log)?;
    Ok(EprbObservation {
        a1: *log.a1(),
        a2: *log.a2(),
        mean_x: r.x_mean,
        mean_y: r.y_mean,
        mean_xy: r.xy_mean,
        n: Some(r.n),
    })
}

const CORRELATION_HEADER: &str = "file,theta,n,xy_mean,stderr_xy,x_mean,y_mean,predicted,sigma_xy,sigma_x,sigma_y";

pub fn run(cfg: &EprbRun, sink: &mut Sink) -> Result<Report> {
    let seed = cfg.seed.unwrap_or_default();
    let settings: Vec<(UnitVector, UnitVector)> = match (cfg.a1, cfg.a2, cfg.theta) {
        (Some(a1), Some(a2), _) => vec![(a1.unit()?, a2.unit()?)],
        (_, _, Some(t)) => vec![(UnitVector::z_axis(), UnitVector::in_xz_plane(t))],
        _ => theta_grid::<f64>(cfg.theta_grid.unwrap_or(DEFAULT_EPRB_POINTS))
            .into_iter()
            .map(|t| (UnitVector::z_axis(), UnitVector::in_xz_plane(t)))
            .collect(),
    };
    let single = settings.len() == 1;
    let mut seeds = Vec::new();
    let mut rows = Vec::new();
    let mut max_sigma = 0f64;
    for (i, (a1, a2)) in settings.iter().enumerate() {
        let s = seed.wrapping_add(i as u64);
        seeds.push(s);
        let log = sample_eprb_signed(a1, a2, cfg.n, cfg.correlation_sign, s);
        let name = if single {
            "pairs.csv".to_owned()
        } else {
            format!("pairs_{i:02}.csv")
        };
        sink.write(&name, |p| save_pair_log(&log, p))?;
        sink.record(&name.replace(".csv", ".json"));
        let (row, sigma) = correlation_row(&name, &log, cfg.correlation_sign)?;
        max_sigma = max_sigma.max(sigma);
        rows.push(row);
    }
    sink.csv("correlations.csv", CORRELATION_HEADER, rows)?;
    let summary = json!({
        "settings": settings.len(),
        "pairs_per_setting": cfg.n,
        "max_sigma_xy": max_sigma,
    });
    Ok(Report::new(summary, seeds))
}

#[derive(Debug, Args, Serialize)]
pub struct EprbReportArgs {
    /// Pair log, or a directory of pair logs.
    pub input: Option<PathBuf>,
    /// Analyzer directions for a CSV without sidecar.
    #[arg(long, requires = "a2")]
    pub a1: Option<Vec3>,
    #[arg(long, requires = "a1")]
    pub a2: Option<Vec3>,
    /// Sign of the predicted correlation column.
    #[arg(long, value_parser = parse_correlation_sign, allow_hyphen_values = true)]
    pub correlation_sign: Option<CorrelationSign>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EprbReport {
    pub input: Option<PathBuf>,
    pub a1: Option<Vec3>,
    pub a2: Option<Vec3>,
    pub correlation_sign: CorrelationSign,
}

pub fn resolve_report(args: &EprbReportArgs, file: &ConfigFile) -> Result<EprbReport> {
    let cfg: EprbReport = file.overlay(&["eprb", "report"], args)?;
    if cfg.input.is_none() {
        bail!("an input pair log is required");
    }
    if cfg.a1.is_some() != cfg.a2.is_some() {
        bail!("a1 and a2 must be given together");
    }
    Ok(cfg)
}

/// Pair logs from a file or directory; a CSV without sidecar needs `a1/a2`.
fn pair_logs(input: &std::path::Path, a1: Option<Vec3>, a2: Option<Vec3>) -> Result<Vec<(String, PairLog)>> {
    if input.is_file() && !sidecar_path(input).exists() {
        let (Some(a1), Some(a2)) = (a1, a2) else {
            bail!("{} has no sidecar; give --a1 and --a2", input.display());
        };
        let name = input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![(name, load_external_pairs(input, a1.unit()?, a2.unit()?)?)]);
    }
    let logs: Vec<(String, PairLog)> = collect_logs(input)?
        .into_iter()
        .filter_map(|(name, l)| match l {
            LoadedEvents::Pairs(p) => Some((name, p)),
            _ => None,
        })
        .collect();
    if logs.is_empty() {
        bail!("no pair logs in {}", input.display());
    }
    Ok(logs)
}

pub fn report(cfg: &EprbReport, sink: &mut Sink) -> Result<Report> {
    let Some(input) = &cfg.input else {
        bail!("an input pair log is required")
    };
    let logs = pair_logs(input, cfg.a1, cfg.a2)?;
    let mut rows = Vec::new();
    let mut observations = Vec::new();
    let mut table = Vec::new();
    for (name, log) in &logs {
        let (row, _) = correlation_row(name, log, cfg.correlation_sign)?;
        let obs = observation(log)?;
        rows.push(row);
        observations.push(obs);
        table.push(json!({
            "file": name,
            "theta": log.theta(),
            "n": obs.n,
            "xy_mean": obs.mean_xy,
            "x_mean": obs.mean_x,
            "y_mean": obs.mean_y,
        }));
    }
    sink.csv("correlations.csv", CORRELATION_HEADER, rows)?;
    sink.write("observations.csv", |p| write_eprb_observations(&observations, p))?;
    let seeds = logs.iter().map(|(_, l)| l.seed()).collect();
    Ok(Report::new(json!({ "logs": table }), seeds))
}

#[derive(Debug, Args, Serialize)]
pub struct EprbTestArgs {
    /// Pair data to test; without it, `trials` logs are simulated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "a2")]
    pub a1: Option<Vec3>,
    #[arg(long, requires = "a1")]
    pub a2: Option<Vec3>,
    /// Pairs per simulated trial.
    #[arg(long)]
    pub n: Option<usize>,
    /// Analyzer angle for simulated trials (radians).
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of simulated trials, seeds `seed, seed+1, ...`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Trials that must pass (default all).
    #[arg(long)]
    pub min_pass: Option<usize>,
    /// Sign of the tested hypothesis <xy> = ±a1·a2.
    #[arg(long, value_parser = parse_correlation_sign, allow_hyphen_values = true)]
    pub correlation_sign: Option<CorrelationSign>,
    /// Sign used to simulate the data.
    #[arg(long, value_parser = parse_correlation_sign, allow_hyphen_values = true)]
    pub source_sign: Option<CorrelationSign>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EprbTest {
    pub input: Option<PathBuf>,
    pub a1: Option<Vec3>,
    pub a2: Option<Vec3>,
    pub n: usize,
    pub theta: f64,
    pub seed: Option<u64>,
    pub trials: usize,
    pub min_pass: Option<usize>,
    pub correlation_sign: CorrelationSign,
    pub source_sign: CorrelationSign,
}

impl Default for EprbTest {
    fn default() -> Self {
        Self {
            input: None,
            a1: None,
            a2: None,
            n: 100_000,
            theta: std::f64::consts::FRAC_PI_3,
            seed: None,
            trials: 1,
            min_pass: None,
            correlation_sign: CorrelationSign::Singlet,
            source_sign: CorrelationSign::Singlet,
        }
    }
}

pub fn resolve_test(args: &EprbTestArgs, file: &ConfigFile) -> Result<EprbTest> {
    let mut cfg: EprbTest = file.overlay(&["eprb", "test"], args)?;
    if cfg.input.is_none() {
        cfg.seed = Some(resolve_seed(cfg.seed, file)?);
        if cfg.trials == 0 || cfg.n < 2 {
            bail!("trials must be positive and n at least 2");
        }
    }
    let trials = if cfg.input.is_some() { 1 } else { cfg.trials };
    let min_pass = *cfg.min_pass.get_or_insert(trials);
    if min_pass > trials {
        bail!("min_pass {min_pass} exceeds the number of trials {trials}");
    }
    Ok(cfg)
}

pub fn test(cfg: &EprbTest, sink: &mut Sink) -> Result<Report> {
    let logs: Vec<(String, PairLog)> = match &cfg.input {
        Some(input) => {
            let logs = pair_logs(input, cfg.a1, cfg.a2)?;
            if logs.len() != 1 {
                bail!("eprb test takes a single pair log");
            }
            logs
        }
        None => {
            let seed = cfg.seed.unwrap_or_default();
            let (a1, a2) = (UnitVector::z_axis(), UnitVector::in_xz_plane(cfg.theta));
            (0..cfg.trials)
                .map(|i| {
                    let s = seed.wrapping_add(i as u64);
                    (
                        format!("trial_{i}"),
                        sample_eprb_signed(&a1, &a2, cfg.n, cfg.source_sign, s),
                    )
                })
                .collect()
        }
    };
    let mut rows = Vec::with_capacity(logs.len());
    let mut passes = 0;
    let mut max_sigma = 0f64;
    for (name, log) in &logs {
        let r = correlation_report(log)?;
        let c = compliance_test(log, cfg.correlation_sign)?;
        passes += usize::from(c.pass);
        max_sigma = max_sigma.max(c.sigma);
        rows.push(format!(
            "{name},{},{},{},{},{},{}",
            log.seed(),
            r.n,
            r.xy_mean,
            r.stderr_xy,
            c.sigma,
            c.pass
        ));
    }
    sink.csv("compliance.csv", "trial,seed,n,xy_mean,stderr_xy,sigma,pass", rows)?;
    let min_pass = cfg.min_pass.unwrap_or(logs.len());
    let summary = json!({
        "hypothesis": cfg.correlation_sign.symbol(),
        "trials": logs.len(),
        "passed": passes,
        "required": min_pass,
        "max_sigma": max_sigma,
    });
    let seeds = logs.iter().map(|(_, l)| l.seed()).collect();
    let mut report = Report::new(summary, seeds);
    if passes < min_pass {
        report.violation = Some(format!(
            "{passes} of {} trials within 5σ of <xy> = {}a1·a2, {min_pass} required",
            logs.len(),
            cfg.correlation_sign.symbol()
        ));
    }
    Ok(report)
}
