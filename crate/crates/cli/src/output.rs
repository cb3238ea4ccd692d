//! Tabular output with an embedded provenance header.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use crate::config::CONFIG_PREFIX;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Bool(bool),
    Null,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Null, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

/// Seventeen significant digits: parses back to the same double.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => num(*x),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Null => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => json!(x),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Null => Value::Null,
        }
    }
}

/// A command result: provenance, key/value notes and one table.
#[derive(Debug, Clone)]
pub struct Document {
    pub command: String,
    pub config: Value,
    pub notes: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Document {
    pub fn new(command: &str, config: Value, columns: &[&str]) -> Self {
        Self {
            command: command.to_string(),
            config,
            notes: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.notes.push((key.into(), value.to_string()));
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# {TOOL} {VERSION}\n# command = {}\n", self.command);
        s += &format!("{CONFIG_PREFIX}{}\n", self.config);
        for (k, v) in &self.notes {
            s += &format!("# {k} = {}\n", v.replace('\n', "; "));
        }
        s += &self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s += &r.iter().map(Cell::csv).collect::<Vec<_>>().join(",");
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let notes: Vec<Value> = self.notes.iter().map(|(k, v)| json!([k, v])).collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "config": self.config,
            "notes": notes,
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        s
    }

    pub fn render(&self, format: &str) -> String {
        if format == "json" {
            self.to_json()
        } else {
            self.to_csv()
        }
    }

    /// Write to `out`, or stdout when absent.
    pub fn emit(&self, format: &str, out: Option<&Path>) -> Result<()> {
        write_text(&self.render(format), out)
    }
}

pub fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("writing to stdout")?;
            stdout.flush().context("writing to stdout")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 71.45178] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let mut d = Document::new("decay", json!({"a": 1}), &["t_us", "re", "label"]);
        d.note("fit", "line one\nline two");
        d.row(vec![Cell::Num(0.5), Cell::Null, Cell::Text("x,y".into())]);
        let csv = d.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "# command = decay");
        assert_eq!(lines[2], "# config = {\"a\":1}");
        assert_eq!(lines[3], "# fit = line one; line two");
        assert_eq!(lines[4], "t_us,re,label");
        assert_eq!(lines[5], "5.0000000000000000e-1,,\"x,y\"");
    }

    #[test]
    fn json_layout() {
        let mut d = Document::new("sweep", json!({}), &["tau_ns", "t2"]);
        d.row(vec![Cell::Num(200.0), Cell::Null]);
        let v: Value = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(v["columns"], json!(["tau_ns", "t2"]));
        assert_eq!(v["rows"][0], json!([200.0, null]));
        assert_eq!(v["version"], json!(VERSION));
    }
}
