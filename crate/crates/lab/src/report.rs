//! Tables, assertions and the JSON summary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use shelab_core::noise::MIX_DESCRIPTION;

use crate::config::Config;
use crate::plot::Chart;
use crate::LabError;

/// One CSV cell. Floats are written in shortest round-trip scientific form.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    F(f64),
    U(u64),
    S(String),
    B(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::F(v) => write!(f, "{v:e}"),
            Value::U(v) => write!(f, "{v}"),
            Value::S(s) => f.write_str(s),
            Value::B(b) => write!(f, "{b}"),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::F(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::U(v as u64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::U(v)
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::U(v as u64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::B(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::S(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::S(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem of the CSV.
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Table { name: name.to_string(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Numeric column by name; non-numeric cells become NaN.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let j = self.columns.iter().position(|c| *c == name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows
            .iter()
            .map(|r| match &r[j] {
                Value::F(v) => *v,
                Value::U(v) => *v as f64,
                _ => f64::NAN,
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Everything a run produces, before it is written out.
#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub assertions: Vec<Assertion>,
    /// Calibrated and fitted constants.
    pub constants: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    pub charts: Vec<Chart>,
    /// Extra binary files (name, bytes).
    pub binaries: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn assert(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.to_string(), pass, detail: detail.into() });
    }

    pub fn constant(&mut self, name: &str, v: f64) {
        self.constants.insert(name.to_string(), v);
    }

    pub fn count(&mut self, name: &str, v: u64) {
        self.counts.insert(name.to_string(), v);
    }

    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: &'a BTreeMap<String, String>,
    seed_mix: &'static str,
    wall_time_s: f64,
    status: &'static str,
    assertions: &'a [Assertion],
    constants: &'a BTreeMap<String, f64>,
    counts: &'a BTreeMap<String, u64>,
    outputs: Vec<String>,
}

pub const SUMMARY_FILE: &str = "summary.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes every table, chart and binary plus one `summary.json` into `dir`.
/// Returns the written paths, summary last.
pub fn write_outputs(report: &Report, config: &Config, dir: &Path, wall_time_s: f64) -> Result<Vec<PathBuf>, LabError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for t in &report.tables {
        let path = dir.join(format!("{}.csv", t.name));
        let bytes = t.to_csv().map_err(|e| LabError::Io { path: path.clone(), source: e.into() })?;
        write(&path, &bytes)?;
        written.push(path);
    }
    for chart in &report.charts {
        match chart.render() {
            Some(svg) => {
                let path = dir.join(format!("{}.svg", chart.name));
                write(&path, svg.as_bytes())?;
                written.push(path);
            }
            None => log::warn!("chart {} has no data; skipped", chart.name),
        }
    }
    for (name, bytes) in &report.binaries {
        let path = dir.join(name);
        write(&path, bytes)?;
        written.push(path);
    }
    let summary = Summary {
        tool: "shelab",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: config.subcommand.name(),
        config: &config.echo,
        seed_mix: MIX_DESCRIPTION,
        wall_time_s,
        status: if report.all_pass() { "pass" } else { "fail" },
        assertions: &report.assertions,
        constants: &report.constants,
        counts: &report.counts,
        outputs: written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
    };
    let path = dir.join(SUMMARY_FILE);
    let mut json = serde_json::to_vec_pretty(&summary).expect("summary serialises");
    json.push(b'\n');
    write(&path, &json)?;
    written.push(path);
    Ok(written)
}
