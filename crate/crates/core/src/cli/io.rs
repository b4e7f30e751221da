//! File formats.
//!
//! Every CSV starts with one `#` provenance line of `key=value` tokens
//! (config digest, seed and, where known, horizon and entity count),
//! followed by a header row. Event times are written with 17 significant
//! digits so files round-trip bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::CliError;
use crate::model::{EventData, Window, WindowSet};

const TOOL: &str = "hawkes-gaps";

/// Hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the compact JSON form of `value`.
pub fn config_digest<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(digest(&serde_json::to_vec(value)?))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub entities: Option<usize>,
}

impl Provenance {
    pub fn new(config_sha256: String, seed: Option<u64>) -> Self {
        Self { config_sha256, seed, ..Default::default() }
    }

    pub fn with_shape(mut self, horizon: f64, entities: usize) -> Self {
        self.horizon = Some(horizon);
        self.entities = Some(entities);
        self
    }

    pub fn line(&self) -> String {
        let mut s = format!("# {TOOL} config_sha256={}", self.config_sha256);
        match self.seed {
            Some(seed) => write!(s, " seed={seed}"),
            None => write!(s, " seed=none"),
        }
        .expect("writing to a String cannot fail");
        if let Some(h) = self.horizon {
            write!(s, " horizon={h}").expect("writing to a String cannot fail");
        }
        if let Some(n) = self.entities {
            write!(s, " entities={n}").expect("writing to a String cannot fail");
        }
        s
    }

    /// Reads the tokens of a provenance line; unknown keys are ignored.
    pub fn parse(line: &str) -> Result<Self, CliError> {
        let mut out = Provenance::default();
        for token in line.trim_start_matches('#').split_whitespace() {
            let Some((key, value)) = token.split_once('=') else { continue };
            let bad = || CliError::Usage(format!("provenance line: bad value for {key}: {value}"));
            match key {
                "config_sha256" => out.config_sha256 = value.to_string(),
                "seed" if value != "none" => out.seed = Some(value.parse().map_err(|_| bad())?),
                "horizon" => out.horizon = Some(value.parse().map_err(|_| bad())?),
                "entities" => out.entities = Some(value.parse().map_err(|_| bad())?),
                _ => {}
            }
        }
        Ok(out)
    }
}

/// Builds a CSV document in memory: provenance line, header, rows.
pub struct CsvDoc {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvDoc {
    pub fn new(provenance: &Provenance, header: &[&str]) -> Result<Self, CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "{}", provenance.line())?;
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn into_bytes(self) -> Result<Vec<u8>, CliError> {
        self.writer.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }

    pub fn save(self, path: &Path) -> Result<(), CliError> {
        let bytes = self.into_bytes()?;
        fs::write(path, bytes).map_err(|e| io_context(path, e))
    }
}

fn io_context(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_context(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_context(path, e))
}

/// Leading provenance plus the parsed CSV records.
struct CsvTable {
    provenance: Provenance,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path, header: &[&str]) -> Result<CsvTable, CliError> {
    let text = read_text(path)?;
    let provenance = match text.lines().find(|l| l.starts_with('#')) {
        Some(line) => Provenance::parse(line)?,
        None => Provenance::default(),
    };
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let found = reader.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Usage(format!(
            "{}: expected header {}, found {}",
            path.display(),
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let rows = reader.records().collect::<Result<Vec<_>, _>>()?;
    Ok(CsvTable { provenance, rows })
}

fn field<T: std::str::FromStr>(path: &Path, row: &csv::StringRecord, idx: usize, name: &str) -> Result<T, CliError> {
    let line = row.position().map_or(0, |p| p.line());
    row.get(idx)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Usage(format!("{}: line {line}: invalid {name}", path.display())))
}

fn resolve<T: Copy>(name: &str, given: Option<T>, from_file: Option<T>, fallback: Option<T>) -> Result<T, CliError> {
    given
        .or(from_file)
        .or(fallback)
        .ok_or_else(|| CliError::Usage(format!("{name} is not recorded in the file; pass it explicitly")))
}

pub fn write_events(path: &Path, events: &EventData, provenance: &Provenance) -> Result<(), CliError> {
    let mut doc = CsvDoc::new(provenance, &["entity", "time"])?;
    for m in 0..events.n() {
        for &t in events.times(m) {
            doc.row([m.to_string(), format!("{t:.16e}")])?;
        }
    }
    doc.save(path)
}

/// Reads an events file. `horizon` and `entities` override the provenance
/// line; without either, the entity count falls back to the largest index
/// seen and the horizon must be known.
pub fn read_events(path: &Path, horizon: Option<f64>, entities: Option<usize>) -> Result<EventData, CliError> {
    let table = read_table(path, &["entity", "time"])?;
    let mut pairs = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let m: usize = field(path, row, 0, "entity")?;
        let t: f64 = field(path, row, 1, "time")?;
        pairs.push((m, t));
    }
    let seen = pairs.iter().map(|&(m, _)| m + 1).max();
    let n = resolve("entity count", entities, table.provenance.entities, seen)?;
    let horizon = resolve("horizon", horizon, table.provenance.horizon, None)?;
    let mut times = vec![Vec::new(); n];
    for (m, t) in pairs {
        let slot = times
            .get_mut(m)
            .ok_or_else(|| CliError::Usage(format!("{}: entity {m} out of range for {n} entities", path.display())))?;
        slot.push(t);
    }
    Ok(EventData::new(horizon, times)?)
}

pub fn write_windows(path: &Path, windows: &WindowSet, provenance: &Provenance) -> Result<(), CliError> {
    let mut doc = CsvDoc::new(provenance, &["entity", "c", "d"])?;
    for m in 0..windows.n() {
        for w in windows.windows(m) {
            doc.row([m.to_string(), format!("{:.16e}", w.start), format!("{:.16e}", w.end)])?;
        }
    }
    doc.save(path)
}

pub fn read_windows(path: &Path, horizon: Option<f64>, entities: Option<usize>) -> Result<WindowSet, CliError> {
    let table = read_table(path, &["entity", "c", "d"])?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let m: usize = field(path, row, 0, "entity")?;
        let c: f64 = field(path, row, 1, "c")?;
        let d: f64 = field(path, row, 2, "d")?;
        rows.push((m, Window::new(c, d)));
    }
    let seen = rows.iter().map(|&(m, _)| m + 1).max();
    let n = resolve("entity count", entities, table.provenance.entities, seen)?;
    let fallback = rows.iter().map(|(_, w)| w.end).reduce(f64::max);
    let horizon = resolve("horizon", horizon, table.provenance.horizon, fallback)?;
    let mut windows = vec![Vec::new(); n];
    for (m, w) in rows {
        let slot = windows
            .get_mut(m)
            .ok_or_else(|| CliError::Usage(format!("{}: entity {m} out of range for {n} entities", path.display())))?;
        slot.push(w);
    }
    Ok(WindowSet::new(horizon, windows)?)
}
