//! Time-stamped observations: CSV and JSON ingestion and output.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use fvddp::Batch;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// From the file extension, defaulting to CSV.
    pub fn detect(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Config(format!("unknown format `{other}` (csv or json)"))),
        }
    }
}

/// Batches with strictly increasing times, at least one of them nonempty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dataset {
    pub batches: Vec<Batch>,
}

impl Dataset {
    pub fn new(batches: Vec<Batch>) -> Result<Self> {
        if batches.iter().all(|b| b.values.is_empty()) {
            return Err(CliError::Data("no observations".into()));
        }
        for w in batches.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(CliError::Data(format!(
                    "times must increase strictly ({} then {})",
                    w[0].time, w[1].time
                )));
            }
        }
        if let Some(b) = batches.iter().find(|b| !b.time.is_finite()) {
            return Err(CliError::Data(format!("non-finite time {}", b.time)));
        }
        Ok(Self { batches })
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(|b| b.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last_time(&self) -> f64 {
        self.batches.last().map_or(0.0, |b| b.time)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "value"]).expect("in-memory write");
        for b in &self.batches {
            for v in &b.values {
                w.write_record([b.time.to_string(), v.to_string()]).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }
}

#[derive(Deserialize)]
struct Row {
    time: f64,
    value: i64,
}

pub fn ingest(path: &Path, format: Option<Format>) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    match format.unwrap_or_else(|| Format::detect(path)) {
        Format::Csv => parse_csv(&text, path),
        Format::Json => parse_json(&text, path),
    }
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Parse { path: path.into(), line: 1, message: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["time", "value"] {
        return Err(CliError::Parse {
            path: path.into(),
            line: 1,
            message: format!("expected header `time,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut batches: Vec<Batch> = Vec::new();
    for rec in reader.deserialize::<Row>() {
        let row = rec.map_err(|e| CliError::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        match batches.last_mut() {
            Some(b) if b.time == row.time => b.values.push(row.value),
            Some(b) if row.time < b.time || row.time.is_nan() => {
                return Err(CliError::Data(format!(
                    "rows must be sorted by time: {} follows {}",
                    row.time, b.time
                )));
            }
            _ => batches.push(Batch { time: row.time, values: vec![row.value] }),
        }
    }
    Dataset::new(batches)
}

pub fn parse_json(text: &str, path: &Path) -> Result<Dataset> {
    let batches: Vec<Batch> = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.into(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    Dataset::new(batches)
}
