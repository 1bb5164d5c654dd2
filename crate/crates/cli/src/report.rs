//! Report envelope shared by every command, plus flat tables for CSV output.

use std::fmt::Write as _;

use ncbound_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A non-fatal failure inside a command (one bound, one metric, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// What failed, e.g. `bound:theorem2` or `metrics:goldblum`.
    pub scope: String,
    /// Error code, the core error variant name.
    pub code: String,
    pub message: String,
}

impl Failure {
    pub fn new(scope: impl Into<String>, err: &Error) -> Self {
        Self {
            scope: scope.into(),
            code: err.code().into(),
            message: err.to_string(),
        }
    }
}

/// Top-level JSON document written by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub inputs: Value,
    pub seed: u64,
    pub outputs: Value,
    /// `ok` when `errors` is empty, else `failed`.
    pub status: String,
    pub errors: Vec<Failure>,
    pub wall_time_s: f64,
}

/// What a command hands back before the envelope is filled in.
#[derive(Debug, Default)]
pub struct Output {
    pub inputs: Value,
    pub outputs: Value,
    pub tables: Vec<Table>,
    pub errors: Vec<Failure>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV with a `# name` line in front, so several tables can share a stream.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.name);
        let _ = writeln!(
            s,
            "{}",
            self.header
                .iter()
                .map(|h| quote(h))
                .collect::<Vec<_>>()
                .join(",")
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}",
                r.iter().map(|c| quote(c)).collect::<Vec<_>>().join(",")
            );
        }
        s
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest round-tripping text for a float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Non-finite floats have no JSON form; they become `null`.
pub fn json_num(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}
