//! CSV + JSON-sidecar persistence of event logs, detector data, operators,
//! wave snapshots, and separation inputs. Floats are written in shortest
//! round-trip form, so save/load is lossless and output is deterministic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eprb::{PairEventLog, PairOutcome};
use crate::error::{Error, Result};
use crate::geometry::UnitVector3;
use crate::inference::{ExperimentConditions, Outcome};
use crate::separation::{EprbObservation, HermitianOperator, SgObservation};
use crate::sg::EventLog;
use crate::wave::{DetectorData, PolarField, SpatialGrid, WaveField};

pub const SCHEMA_VERSION: u32 = 1;

/// Sidecar describing a CSV data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schema", deny_unknown_fields)]
pub enum Sidecar {
    #[serde(rename = "sg-events")]
    Sg {
        version: u32,
        n: u64,
        theta: f64,
        a: UnitVector3<f64>,
        m_direction: UnitVector3<f64>,
        seed: u64,
        conditions: ExperimentConditions,
    },
    #[serde(rename = "eprb-pairs")]
    Pairs {
        version: u32,
        n: u64,
        theta: f64,
        a1: UnitVector3<f64>,
        a2: UnitVector3<f64>,
        seed: u64,
        conditions: ExperimentConditions,
    },
    #[serde(rename = "detector-clicks")]
    Detector {
        version: u32,
        k_det: usize,
        n_repeats: u64,
        slices: usize,
    },
}

impl Sidecar {
    fn version(&self) -> u32 {
        match self {
            Self::Sg { version, .. } | Self::Pairs { version, .. } | Self::Detector { version, .. } => *version,
        }
    }
}

/// Any file [`load_events`] understands.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedEvents {
    Sg(EventLog<f64>),
    Pairs(PairEventLog<f64>),
    Detector(DetectorData),
}

/// `events.csv` → `events.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_sidecar(csv: &Path) -> Result<Sidecar> {
    let path = sidecar_path(csv);
    let file = File::open(&path).map_err(|e| Error::SchemaMismatch(format!("sidecar {}: {e}", path.display())))?;
    let sidecar: Sidecar = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::SchemaMismatch(format!("sidecar {}: {e}", path.display())))?;
    if sidecar.version() != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "schema version {} (expected {SCHEMA_VERSION})",
            sidecar.version()
        )));
    }
    Ok(sidecar)
}

fn csv_reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers != expected {
        return Err(Error::SchemaMismatch(format!(
            "{}: columns {headers:?}, expected {expected:?}",
            path.display()
        )));
    }
    Ok(reader)
}

fn corrupt(path: &Path, row: usize, what: impl std::fmt::Display) -> Error {
    Error::CorruptData(format!("{} row {row}: {what}", path.display()))
}

fn parse<V: std::str::FromStr>(path: &Path, row: usize, field: Option<&str>) -> Result<V> {
    let text = field.ok_or_else(|| corrupt(path, row, "missing field"))?;
    text.parse()
        .map_err(|_| corrupt(path, row, format!("bad value {text:?}")))
}

fn parse_outcome(path: &Path, row: usize, field: Option<&str>) -> Result<Outcome> {
    let v: i64 = parse(path, row, field)?;
    Outcome::new(v).map_err(|_| corrupt(path, row, format!("outcome {v} is not ±1")))
}

fn check_index(path: &Path, row: usize, index: u64) -> Result<()> {
    if index != row as u64 {
        return Err(corrupt(path, row, format!("index {index} out of sequence")));
    }
    Ok(())
}

fn check_count(path: &Path, declared: u64, rows: usize) -> Result<()> {
    if declared != rows as u64 {
        return Err(Error::CorruptData(format!(
            "{}: sidecar declares {declared} rows, file holds {rows}",
            path.display()
        )));
    }
    Ok(())
}

/// Writes `index,outcome` rows and the sidecar.
pub fn save_event_log(log: &EventLog<f64>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,outcome")?;
    for (i, o) in log.outcomes().iter().enumerate() {
        writeln!(w, "{i},{}", o.value())?;
    }
    w.flush()?;
    write_json(
        &Sidecar::Sg {
            version: SCHEMA_VERSION,
            n: log.len() as u64,
            theta: log.theta(),
            a: *log.a(),
            m_direction: *log.m_direction(),
            seed: log.seed(),
            conditions: log.conditions().clone(),
        },
        &sidecar_path(path),
    )
}

/// Writes `index,x,y` rows and the sidecar.
pub fn save_pair_log(log: &PairEventLog<f64>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,x,y")?;
    for (i, p) in log.pairs().iter().enumerate() {
        writeln!(w, "{i},{},{}", p.x.value(), p.y.value())?;
    }
    w.flush()?;
    write_json(
        &Sidecar::Pairs {
            version: SCHEMA_VERSION,
            n: log.len() as u64,
            theta: log.theta(),
            a1: *log.a1(),
            a2: *log.a2(),
            seed: log.seed(),
            conditions: log.conditions().clone(),
        },
        &sidecar_path(path),
    )
}

/// Writes `slice,detector,clicks` rows (detector `j ∈ [-K, K]`) and the sidecar.
pub fn save_detector_data(data: &DetectorData, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "slice,detector,clicks")?;
    let k = data.k_det as i64;
    for (tau, row) in data.clicks.iter().enumerate() {
        for (idx, c) in row.iter().enumerate() {
            writeln!(w, "{tau},{},{c}", idx as i64 - k)?;
        }
    }
    w.flush()?;
    write_json(
        &Sidecar::Detector {
            version: SCHEMA_VERSION,
            k_det: data.k_det,
            n_repeats: data.n_repeats,
            slices: data.slices(),
        },
        &sidecar_path(path),
    )
}

fn read_outcomes(path: &Path) -> Result<Vec<Outcome>> {
    let mut reader = csv_reader(path, &["index", "outcome"])?;
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        check_index(path, row, parse(path, row, rec.get(0))?)?;
        out.push(parse_outcome(path, row, rec.get(1))?);
    }
    Ok(out)
}

fn read_pairs(path: &Path, with_index: bool) -> Result<Vec<PairOutcome>> {
    let columns: &[&str] = if with_index { &["index", "x", "y"] } else { &["x", "y"] };
    let mut reader = csv_reader(path, columns)?;
    let offset = usize::from(with_index);
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if with_index {
            check_index(path, row, parse(path, row, rec.get(0))?)?;
        }
        out.push(PairOutcome::new(
            parse_outcome(path, row, rec.get(offset))?,
            parse_outcome(path, row, rec.get(offset + 1))?,
        ));
    }
    Ok(out)
}

fn read_detector(path: &Path, k_det: usize, n_repeats: u64, slices: usize) -> Result<DetectorData> {
    let mut reader = csv_reader(path, &["slice", "detector", "clicks"])?;
    let bins = 2 * k_det + 1;
    let mut clicks = vec![vec![0u64; bins]; slices];
    let mut rows = 0usize;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let tau: usize = parse(path, row, rec.get(0))?;
        let j: i64 = parse(path, row, rec.get(1))?;
        let c: u64 = parse(path, row, rec.get(2))?;
        if tau != row / bins || j != (row % bins) as i64 - k_det as i64 {
            return Err(corrupt(path, row, format!("unexpected cell ({tau}, {j})")));
        }
        clicks[tau][row % bins] = c;
        rows += 1;
    }
    check_count(path, (slices * bins) as u64, rows)?;
    DetectorData::new(k_det, n_repeats, clicks)
}

/// Loads any sidecar-described data file.
pub fn load_events(path: &Path) -> Result<LoadedEvents> {
    match read_sidecar(path)? {
        Sidecar::Sg {
            n,
            a,
            m_direction,
            seed,
            conditions,
            ..
        } => {
            let outcomes = read_outcomes(path)?;
            check_count(path, n, outcomes.len())?;
            Ok(LoadedEvents::Sg(EventLog::new(
                outcomes,
                a,
                m_direction,
                seed,
                conditions,
            )))
        }
        Sidecar::Pairs {
            n,
            a1,
            a2,
            seed,
            conditions,
            ..
        } => {
            let pairs = read_pairs(path, true)?;
            check_count(path, n, pairs.len())?;
            Ok(LoadedEvents::Pairs(PairEventLog::new(pairs, a1, a2, seed, conditions)))
        }
        Sidecar::Detector {
            k_det,
            n_repeats,
            slices,
            ..
        } => Ok(LoadedEvents::Detector(read_detector(path, k_det, n_repeats, slices)?)),
    }
}

pub fn load_event_log(path: &Path) -> Result<EventLog<f64>> {
    match load_events(path)? {
        LoadedEvents::Sg(log) => Ok(log),
        _ => Err(Error::SchemaMismatch(format!(
            "{} is not an SG event log",
            path.display()
        ))),
    }
}

pub fn load_pair_log(path: &Path) -> Result<PairEventLog<f64>> {
    match load_events(path)? {
        LoadedEvents::Pairs(log) => Ok(log),
        _ => Err(Error::SchemaMismatch(format!("{} is not a pair log", path.display()))),
    }
}

/// Pair CSV from elsewhere (`x,y` or `index,x,y`, no sidecar) with the
/// analyzer directions supplied by the caller.
pub fn load_external_pairs(path: &Path, a1: UnitVector3<f64>, a2: UnitVector3<f64>) -> Result<PairEventLog<f64>> {
    let first_line = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?
        .headers()?
        .iter()
        .next()
        .map(str::to_owned);
    let pairs = read_pairs(path, first_line.as_deref() == Some("index"))?;
    let conditions = ExperimentConditions::new("eprb").with("source", "external");
    Ok(PairEventLog::new(pairs, a1, a2, 0, conditions))
}

pub fn save_operator(op: &HermitianOperator<f64>, path: &Path) -> Result<()> {
    write_json(op, path)
}

pub fn load_operator(path: &Path) -> Result<HermitianOperator<f64>> {
    let file = File::open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))
}

/// One `x,re_psi,im_psi,P,S` file per stored slice; `S` is blank where the
/// phase is undefined. Returns the written paths.
pub fn write_snapshots(
    psi: &WaveField<f64>,
    polar: &PolarField<f64>,
    grid: &SpatialGrid<f64>,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(psi.n_t);
    for tau in 0..psi.n_t {
        let path = dir.join(format!("{prefix}_{tau:05}.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "x,re_psi,im_psi,P,S")?;
        for i in 0..psi.n_x {
            let k = tau * psi.n_x + i;
            let z = psi.psi[k];
            let s = if polar.valid[k] {
                polar.s[k].to_string()
            } else {
                String::new()
            };
            writeln!(w, "{},{},{},{},{s}", grid.x(i), z.re, z.im, polar.p[k])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a snapshot back as `(x, ψ)`.
pub fn read_snapshot(path: &Path) -> Result<(Vec<f64>, Vec<num_complex::Complex<f64>>)> {
    let mut reader = csv_reader(path, &["x", "re_psi", "im_psi", "P", "S"])?;
    let (mut xs, mut psi) = (Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        xs.push(parse(path, row, rec.get(0))?);
        psi.push(num_complex::Complex::new(
            parse(path, row, rec.get(1))?,
            parse(path, row, rec.get(2))?,
        ));
    }
    Ok((xs, psi))
}

fn unit(path: &Path, row: usize, c: [f64; 3]) -> Result<UnitVector3<f64>> {
    UnitVector3::try_from(c).map_err(|e| corrupt(path, row, e))
}

fn optional_count(path: &Path, row: usize, field: Option<&str>) -> Result<Option<u64>> {
    match field {
        None | Some("") => Ok(None),
        f => parse(path, row, f).map(Some),
    }
}

/// `ax,ay,az,mx,my,mz,mean_x[,n]` rows.
pub fn read_sg_observations(path: &Path) -> Result<Vec<SgObservation<f64>>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let base = ["ax", "ay", "az", "mx", "my", "mz", "mean_x"];
    if headers[..headers.len().min(7)] != base || headers.len() > 8 || (headers.len() == 8 && headers[7] != "n") {
        return Err(Error::SchemaMismatch(format!(
            "{}: columns {headers:?}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let v = |k: usize| parse::<f64>(path, row, rec.get(k));
        out.push(SgObservation {
            a: unit(path, row, [v(0)?, v(1)?, v(2)?])?,
            m: unit(path, row, [v(3)?, v(4)?, v(5)?])?,
            mean_x: v(6)?,
            n: optional_count(path, row, rec.get(7))?,
        });
    }
    Ok(out)
}

/// `a1x,a1y,a1z,a2x,a2y,a2z,mean_x,mean_y,mean_xy[,n]` rows.
pub fn read_eprb_observations(path: &Path) -> Result<Vec<EprbObservation<f64>>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let base = ["a1x", "a1y", "a1z", "a2x", "a2y", "a2z", "mean_x", "mean_y", "mean_xy"];
    if headers[..headers.len().min(9)] != base || headers.len() > 10 || (headers.len() == 10 && headers[9] != "n") {
        return Err(Error::SchemaMismatch(format!(
            "{}: columns {headers:?}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let v = |k: usize| parse::<f64>(path, row, rec.get(k));
        out.push(EprbObservation {
            a1: unit(path, row, [v(0)?, v(1)?, v(2)?])?,
            a2: unit(path, row, [v(3)?, v(4)?, v(5)?])?,
            mean_x: v(6)?,
            mean_y: v(7)?,
            mean_xy: v(8)?,
            n: optional_count(path, row, rec.get(9))?,
        });
    }
    Ok(out)
}

pub fn write_sg_observations(obs: &[SgObservation<f64>], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ax,ay,az,mx,my,mz,mean_x,n")?;
    for o in obs {
        let [ax, ay, az] = o.a.components();
        let [mx, my, mz] = o.m.components();
        let n = o.n.map(|n| n.to_string()).unwrap_or_default();
        writeln!(w, "{ax},{ay},{az},{mx},{my},{mz},{},{n}", o.mean_x)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eprb_observations(obs: &[EprbObservation<f64>], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "a1x,a1y,a1z,a2x,a2y,a2z,mean_x,mean_y,mean_xy,n")?;
    for o in obs {
        let [a, b, c] = o.a1.components();
        let [d, e, f] = o.a2.components();
        let n = o.n.map(|n| n.to_string()).unwrap_or_default();
        writeln!(w, "{a},{b},{c},{d},{e},{f},{},{},{},{n}", o.mean_x, o.mean_y, o.mean_xy)?;
    }
    w.flush()?;
    Ok(())
}
