//! Task results: CSV tables, a JSON summary, optional binary blobs, and the
//! list of failed formula checks.

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::config::Task;
use crate::error::{CliError, Result};

/// 17 significant digits, `.` decimal point, independent of locale.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    B(bool),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::F(v) => f.write_str(&fmt_f64(*v)),
            Cell::I(v) => write!(f, "{v}"),
            Cell::B(v) => write!(f, "{v}"),
            Cell::S(s) if s.contains([',', '"', '\n']) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            Cell::S(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(name: &str, header: &[S]) -> Self {
        Table { name: name.to_string(), header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header of {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::to_string).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Column names `prefix1..prefixN`.
pub fn coord_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

pub fn complex_cells(z: Complex64) -> [Cell; 2] {
    [Cell::F(z.re), Cell::F(z.im)]
}

pub fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

/// A formula check that failed beyond tolerance. `operation` names the module
/// operation and `anchor` the identity it checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub operation: String,
    pub anchor: String,
    pub detail: String,
}

impl Mismatch {
    pub fn new(operation: &str, anchor: &str, detail: impl Into<String>) -> Self {
        Mismatch { operation: operation.to_string(), anchor: anchor.to_string(), detail: detail.into() }
    }
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MISMATCH {} [{}]: {}", self.operation, self.anchor, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub task: Task,
    pub summary: Vec<String>,
    pub tables: Vec<Table>,
    pub data: Value,
    pub mismatches: Vec<Mismatch>,
    pub blobs: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn new(task: Task) -> Self {
        Report { task, summary: Vec::new(), tables: Vec::new(), data: Value::Null, mismatches: Vec::new(), blobs: Vec::new() }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn fail(&mut self, m: Mismatch) {
        self.mismatches.push(m);
    }

    pub fn json(&self) -> Value {
        json!({
            "task": self.task.name(),
            "summary": self.summary,
            "mismatches": self.mismatches,
            "tables": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
            "data": self.data,
        })
    }

    /// Writes `<table>.csv` for every table, `<task>.json`, and the blobs.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
            written.push(p);
            Ok(())
        };
        for t in &self.tables {
            put(&format!("{}.csv", t.name), t.to_csv().as_bytes())?;
        }
        let mut js = serde_json::to_string_pretty(&self.json()).expect("report serializes");
        js.push('\n');
        put(&format!("{}.json", self.task.stem()), js.as_bytes())?;
        for (name, bytes) in &self.blobs {
            put(name, bytes)?;
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_significant_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(-0.1), "-1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_quotes_only_when_needed() {
        let mut t = Table::new("t", &["a", "b", "c"]);
        t.push(vec![Cell::from("x, y"), Cell::from(3i64), Cell::from(true)]);
        t.push(vec![Cell::from("say \"hi\""), Cell::from(0.5), Cell::from("plain")]);
        assert_eq!(t.to_csv(), "a,b,c\n\"x, y\",3,true\n\"say \"\"hi\"\"\",5.0000000000000000e-1,plain\n");
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn ragged_rows_are_a_bug() {
        Table::new("t", &["a"]).push(vec![Cell::I(1), Cell::I(2)]);
    }

    #[test]
    fn mismatch_line_names_operation_and_anchor() {
        let m = Mismatch::new("validate_canonical", "symplectic (cross block)", "residual 1e-3 exceeds 1e-10");
        assert_eq!(m.to_string(), "MISMATCH validate_canonical [symplectic (cross block)]: residual 1e-3 exceeds 1e-10");
    }
}
