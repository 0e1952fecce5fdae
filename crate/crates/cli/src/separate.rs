//! `separate sg` and `separate eprb`.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand, ValueEnum};
use li_qt_core::inference::Outcome;
use li_qt_core::io::{
    read_eprb_observations, read_sg_observations, save_operator, write_eprb_observations, write_sg_observations,
};
use li_qt_core::rng::EventRng;
use li_qt_core::separation::{rho_to_state, separate_eprb, separate_sg, tabulate_eprb, tabulate_sg};
use li_qt_core::{Error, UnitVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::common::Vec3;
use crate::config::{resolve_seed, ConfigFile};
use crate::manifest::Sink;
use crate::Report;

#[derive(Debug, Subcommand)]
pub enum SeparateCommand {
    /// Recover the source vector from single-particle frequency data.
    Sg(SeparateSgArgs),
    /// Recover the two-particle density matrix from pair correlation data.
    Eprb(SeparateEprbArgs),
}

/// Exact frequency functions over a random design, for use without `--input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SgModel {
    /// `(1 + x a·M)/2`.
    Robust,
    /// `(1 + x (a·M)²)/2`, not separable.
    Quadratic,
    /// `1/2`, no signal.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EprbModel {
    /// `<xy> = -a1·a2`.
    Singlet,
    /// `<xy> = +a1·a2`.
    Positive,
    /// `<xy> = -(a1·a2)³`, not separable.
    Cubic,
}

#[derive(Debug, Args, Serialize)]
pub struct SeparateSgArgs {
    /// Observation CSV `ax,ay,az,mx,my,mz,mean_x[,n]`.
    #[arg(long, conflicts_with = "model")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<SgModel>,
    /// Configurations in the synthetic design.
    #[arg(long)]
    pub design: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Source direction of the synthetic model.
    #[arg(long)]
    pub m: Option<Vec3>,
    /// Exit 3 when the data cannot be separated.
    #[arg(long, value_name = "BOOL")]
    pub assert_separable: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparateSg {
    pub input: Option<PathBuf>,
    pub model: Option<SgModel>,
    pub design: usize,
    pub seed: Option<u64>,
    pub m: Vec3,
    pub assert_separable: bool,
}

impl Default for SeparateSg {
    fn default() -> Self {
        Self {
            input: None,
            model: None,
            design: 20,
            seed: None,
            m: Vec3([1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]),
            assert_separable: true,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SeparateEprbArgs {
    /// Observation CSV `a1x,a1y,a1z,a2x,a2y,a2z,mean_x,mean_y,mean_xy[,n]`.
    #[arg(long, conflicts_with = "model")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<EprbModel>,
    #[arg(long)]
    pub design: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "BOOL")]
    pub assert_separable: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparateEprb {
    pub input: Option<PathBuf>,
    pub model: Option<EprbModel>,
    pub design: usize,
    pub seed: Option<u64>,
    pub assert_separable: bool,
}

impl Default for SeparateEprb {
    fn default() -> Self {
        Self {
            input: None,
            model: None,
            design: 20,
            seed: None,
            assert_separable: true,
        }
    }
}

fn check_source(input: &Option<PathBuf>, model: bool) -> Result<()> {
    match (input.is_some(), model) {
        (true, true) => bail!("give either an input file or a model, not both"),
        (false, false) => bail!("give an input file or a synthetic model"),
        _ => Ok(()),
    }
}

pub fn resolve_sg(args: &SeparateSgArgs, file: &ConfigFile) -> Result<SeparateSg> {
    let mut cfg: SeparateSg = file.overlay(&["separate", "sg"], args)?;
    check_source(&cfg.input, cfg.model.is_some())?;
    if cfg.model.is_some() {
        cfg.seed = Some(resolve_seed(cfg.seed, file)?);
    }
    Ok(cfg)
}

pub fn resolve_eprb(args: &SeparateEprbArgs, file: &ConfigFile) -> Result<SeparateEprb> {
    let mut cfg: SeparateEprb = file.overlay(&["separate", "eprb"], args)?;
    check_source(&cfg.input, cfg.model.is_some())?;
    if cfg.model.is_some() {
        cfg.seed = Some(resolve_seed(cfg.seed, file)?);
    }
    Ok(cfg)
}

/// A failed separation becomes a report entry; with `assert` it is also a
/// contract violation.
fn failure(e: Error, assert: bool, report: &mut Report) -> Result<()> {
    let status = match &e {
        Error::NonSeparable { residual, threshold } => {
            report.summary["residual"] = json!(residual);
            report.summary["threshold"] = json!(threshold);
            "non-separable"
        }
        Error::TrivialSignal => "trivial-signal",
        _ => return Err(e.into()),
    };
    report.summary["status"] = json!(status);
    if assert {
        report.violation = Some(e.to_string());
    }
    Ok(())
}

pub fn sg(cfg: &SeparateSg, sink: &mut Sink) -> Result<Report> {
    let mut seeds = Vec::new();
    let observations = match (&cfg.input, cfg.model) {
        (Some(path), _) => read_sg_observations(path)?,
        (None, Some(model)) => {
            let seed = cfg.seed.unwrap_or_default();
            seeds.push(seed);
            let m = cfg.m.unit()?;
            let mut rng = EventRng::new(seed);
            let design: Vec<_> = (0..cfg.design).map(|_| (UnitVector::random(&mut rng), m)).collect();
            let mean = move |a: &UnitVector, m: &UnitVector| match model {
                SgModel::Robust => a.dot(m),
                SgModel::Quadratic => a.dot(m).powi(2),
                SgModel::Constant => 0.0,
            };
            let f = |x: Outcome, a: &UnitVector, m: &UnitVector| 0.5 * (1.0 + x.as_real::<f64>() * mean(a, m));
            let obs = tabulate_sg(&f, &design);
            sink.write("observations.csv", |p| write_sg_observations(&obs, p))?;
            obs
        }
        (None, None) => bail!("give an input file or a synthetic model"),
    };
    let mut report = Report::new(json!({ "configurations": observations.len() }), seeds);
    match separate_sg(&observations) {
        Ok(sep) => {
            let rho = sep.density_matrix();
            sink.json("separation.json", &sep)?;
            sink.write("rho.json", |p| save_operator(&rho, p))?;
            report.summary["status"] = json!("separable");
            report.summary["m_est"] = json!(sep.m_est().components());
            report.summary["rho_norm"] = json!(sep.rho_norm());
            report.summary["u0"] = json!(sep.u0);
            report.summary["residual"] = json!(sep.residual);
            report.summary["threshold"] = json!(sep.threshold);
            report.summary["projector_deviation"] = json!(rho.projector_deviation());
        }
        Err(e) => failure(e, cfg.assert_separable, &mut report)?,
    }
    Ok(report)
}

pub fn eprb(cfg: &SeparateEprb, sink: &mut Sink) -> Result<Report> {
    let mut seeds = Vec::new();
    let observations = match (&cfg.input, cfg.model) {
        (Some(path), _) => read_eprb_observations(path)?,
        (None, Some(model)) => {
            let seed = cfg.seed.unwrap_or_default();
            seeds.push(seed);
            let mut rng = EventRng::new(seed);
            let design: Vec<_> = (0..cfg.design)
                .map(|_| (UnitVector::random(&mut rng), UnitVector::random(&mut rng)))
                .collect();
            let obs = tabulate_eprb(&design, |c: f64| match model {
                EprbModel::Singlet => -c,
                EprbModel::Positive => c,
                EprbModel::Cubic => -c.powi(3),
            });
            sink.write("observations.csv", |p| write_eprb_observations(&obs, p))?;
            obs
        }
        (None, None) => bail!("give an input file or a synthetic model"),
    };
    let mut report = Report::new(json!({ "configurations": observations.len() }), seeds);
    match separate_eprb(&observations) {
        Ok(sep) => {
            let rho = sep.density_matrix();
            sink.json("separation.json", &sep)?;
            sink.write("rho.json", |p| save_operator(&rho, p))?;
            report.summary["status"] = json!("separable");
            report.summary["coefficients"] = serde_json::to_value(sep.coefficients)?;
            report.summary["residual"] = json!(sep.residual);
            report.summary["threshold"] = json!(sep.threshold);
            report.summary["projector_deviation"] = json!(rho.projector_deviation());
            match rho_to_state(&rho) {
                Ok(state) => {
                    let amps = json!(state.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>());
                    sink.json("state.json", &amps)?;
                    report.summary["state"] = amps;
                }
                Err(Error::NotPure { deviation }) => {
                    report.summary["state"] = Value::Null;
                    report.summary["mixed_deviation"] = json!(deviation);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(e) => failure(e, cfg.assert_separable, &mut report)?,
    }
    Ok(report)
}
