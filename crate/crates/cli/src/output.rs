//! Report tables and the three output files.

use std::fmt::Write as _;
use std::path::Path;

use ncdyadic::CheckRow;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{self, CliError};

pub const CSV_NAME: &str = "report.csv";
pub const JSON_NAME: &str = "report.json";
pub const META_NAME: &str = "meta.json";

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // shortest round-trip digits, exponent form for tiny and huge values
            Cell::Float(v) => format!("{v:?}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) if v.is_finite() => Value::from(*v),
            Cell::Float(v) => Value::String(format!("{v}")),
            Cell::Bool(v) => Value::Bool(*v),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    fn to_json(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let map = self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                Value::Object(map)
            })
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checks asserted for one instance, with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: usize,
    pub label: String,
    pub seeds: Value,
    pub digests: Value,
    pub checks: Vec<CheckRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub checks: usize,
    pub failed: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub suite: String,
    pub version: String,
    pub seed: u64,
    pub config: Value,
    pub csv_sha256: String,
    pub summary: Summary,
    pub rows: Vec<Value>,
    pub instances: Vec<InstanceRecord>,
}

pub struct SuiteOutput {
    pub table: Table,
    pub instances: Vec<InstanceRecord>,
}

impl SuiteOutput {
    pub fn summary(&self) -> Summary {
        let checks = self.instances.iter().map(|r| r.checks.len()).sum();
        let failed = self.instances.iter().flat_map(|r| &r.checks).filter(|c| !c.pass).count();
        Summary {
            rows: self.table.rows.len(),
            checks,
            failed,
            pass: failed == 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
    pub threads: usize,
    pub config_path: Option<String>,
}

pub fn write_reports(
    dir: &Path,
    suite: &str,
    seed: u64,
    config: Value,
    output: &SuiteOutput,
    meta: &Meta,
) -> Result<ReportFile, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let csv = output.table.to_csv();
    let report = ReportFile {
        suite: suite.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        csv_sha256: sha256_hex(csv.as_bytes()),
        summary: output.summary(),
        rows: output.table.to_json(),
        instances: output.instances.clone(),
    };
    error::write(&dir.join(CSV_NAME), &csv)?;
    error::write(&dir.join(JSON_NAME), &pretty(&report))?;
    error::write(&dir.join(META_NAME), &pretty(meta))?;
    Ok(report)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Loads a report directory and checks the CSV against its recorded digest.
pub fn read_report(dir: &Path) -> Result<(ReportFile, bool), CliError> {
    let text = error::read(&dir.join(JSON_NAME))?;
    let report: ReportFile =
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", dir.join(JSON_NAME).display())))?;
    let csv = error::read(&dir.join(CSV_NAME))?;
    let intact = sha256_hex(csv.as_bytes()) == report.csv_sha256;
    Ok((report, intact))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting() {
        let mut t = Table::new(&["a", "b", "c", "d"]);
        t.push(vec![1usize.into(), 0.1f64.into(), "x,y".into(), true.into()]);
        t.push(vec![3usize.into(), 1.5e-33f64.into(), "".into(), true.into()]);
        t.push(vec![2usize.into(), f64::INFINITY.into(), "plain".into(), false.into()]);
        assert_eq!(t.to_csv(), "a,b,c,d\n1,0.1,\"x,y\",true\n3,1.5e-33,,true\n2,inf,plain,false\n");
        let json = t.to_json();
        assert_eq!(json[0]["b"], Value::from(0.1));
        assert_eq!(json[2]["b"], Value::from("inf"));
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
