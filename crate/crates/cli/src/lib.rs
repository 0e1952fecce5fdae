//! Command-line front end of the inference toolkit.
//!
//! Every run resolves its configuration (flags over `--config` file over
//! defaults), executes, prints a JSON summary and, with `--out <dir>`, writes
//! its files plus a `manifest.json` listing each output with its SHA-256.
//! `report <dir> --replay <dir2>` re-executes a manifest and compares bytes.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 a numerical contract
//! failed.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::Value;

pub mod check;
pub mod common;
pub mod config;
pub mod eprb;
pub mod evolve;
pub mod manifest;
pub mod report;
pub mod separate;
pub mod sg;

use config::ConfigFile;
use manifest::{OutputDigest, RunManifest, Sink, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CONTRACT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "li-qt",
    version,
    about = "Logical-inference derivation of quantum theory: simulations and checks"
)]
pub struct Cli {
    /// TOML configuration (see README for the schema).
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<std::path::PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stern-Gerlach experiment.
    #[command(subcommand)]
    Sg(sg::SgCommand),
    /// Einstein-Podolsky-Rosen-Bohm experiment.
    #[command(subcommand)]
    Eprb(eprb::EprbCommand),
    /// Separation of frequency data into source and analyzer operators.
    #[command(subcommand)]
    Separate(separate::SeparateCommand),
    /// Evolve a Gaussian packet.
    Evolve(evolve::EvolveArgs),
    /// Numerical checks.
    #[command(subcommand)]
    Check(check::CheckCommand),
    /// Verify the digests of a run and optionally replay it.
    Report(report::ReportArgs),
}

/// Result of one command.
#[derive(Debug, Clone)]
pub struct Report {
    pub summary: Value,
    pub seeds: Vec<u64>,
    /// Set when a numerical contract failed; the run still writes its outputs.
    pub violation: Option<String>,
}

impl Report {
    pub fn new(summary: Value, seeds: Vec<u64>) -> Self {
        Self {
            summary,
            seeds,
            violation: None,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// 3 for library errors that signal a failed numerical contract, 2 for
/// everything else.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    use li_qt_core::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::NonSeparable { .. }
                | E::TrivialSignal
                | E::NoSignal { .. }
                | E::UnstableStep { .. }
                | E::BoundaryContact { .. }
                | E::NotPure { .. }
                | E::PhaseUndefined { .. }
                | E::DegenerateProbability(_) => EXIT_CONTRACT,
                _ => EXIT_INVALID,
            };
        }
    }
    EXIT_INVALID
}

fn execute(cli: &Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let (name, config) = match &cli.command {
        Command::Sg(sg::SgCommand::Run(a)) => ("sg run", json(sg::resolve_run(a, &file)?)?),
        Command::Sg(sg::SgCommand::Fit(a)) => ("sg fit", json(sg::resolve_fit(a, &file)?)?),
        Command::Eprb(eprb::EprbCommand::Run(a)) => ("eprb run", json(eprb::resolve_run(a, &file)?)?),
        Command::Eprb(eprb::EprbCommand::Report(a)) => ("eprb report", json(eprb::resolve_report(a, &file)?)?),
        Command::Eprb(eprb::EprbCommand::Test(a)) => ("eprb test", json(eprb::resolve_test(a, &file)?)?),
        Command::Separate(separate::SeparateCommand::Sg(a)) => ("separate sg", json(separate::resolve_sg(a, &file)?)?),
        Command::Separate(separate::SeparateCommand::Eprb(a)) => {
            ("separate eprb", json(separate::resolve_eprb(a, &file)?)?)
        }
        Command::Evolve(a) => ("evolve", json(evolve::resolve(a, &file)?)?),
        Command::Check(check::CheckCommand::Fq(a)) => ("check fq", json(check::resolve_fq(a, &file)?)?),
        Command::Check(check::CheckCommand::Fisher(a)) => ("check fisher", json(check::resolve_fisher(a, &file)?)?),
        Command::Check(check::CheckCommand::Madelung(a)) => {
            ("check madelung", json(check::resolve_madelung(a, &file)?)?)
        }
        Command::Report(a) => return report::execute(a),
    };
    let (code, _) = run_resolved(name, &config, cli.out.as_deref())?;
    Ok(code)
}

fn json(value: impl serde::Serialize) -> Result<Value> {
    Ok(serde_json::to_value(value)?)
}

fn dispatch(name: &str, config: &Value, sink: &mut Sink) -> Result<Report> {
    fn cfg<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T> {
        serde_json::from_value(v.clone()).context("invalid resolved configuration")
    }
    match name {
        "sg run" => sg::run(&cfg(config)?, sink),
        "sg fit" => sg::fit(&cfg(config)?, sink),
        "eprb run" => eprb::run(&cfg(config)?, sink),
        "eprb report" => eprb::report(&cfg(config)?, sink),
        "eprb test" => eprb::test(&cfg(config)?, sink),
        "separate sg" => separate::sg(&cfg(config)?, sink),
        "separate eprb" => separate::eprb(&cfg(config)?, sink),
        "evolve" => evolve::run(&cfg(config)?, sink),
        "check fq" => check::fq(&cfg(config)?, sink),
        "check fisher" => check::fisher(&cfg(config)?, sink),
        "check madelung" => check::madelung(&cfg(config)?, sink),
        other => anyhow::bail!("unknown command `{other}`"),
    }
}

/// Executes a resolved configuration; returns the exit code and the digests
/// of what was written.
pub fn run_resolved(name: &str, config: &Value, out: Option<&Path>) -> Result<(i32, Vec<OutputDigest>)> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut sink = Sink::new(out.map(Path::to_owned));
    let report = dispatch(name, config, &mut sink)?;
    sink.json("summary.json", &report.summary)?;
    let outputs = sink.digests()?;
    if let Some(dir) = out {
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: name.into(),
            config: config.clone(),
            seeds: report.seeds.clone(),
            timestamp_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: outputs.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
    }
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    match report.violation {
        Some(v) => {
            eprintln!("contract failure: {v}");
            Ok((EXIT_CONTRACT, outputs))
        }
        None => Ok((EXIT_OK, outputs)),
    }
}
