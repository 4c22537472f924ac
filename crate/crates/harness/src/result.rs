//! Study tables: fixed columns, one row per (parameter tuple, recorded time).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::StudyKind;

/// Stated in every report header.
pub const METRIC_NOTE: &str =
    "distances are trace norms of density-matrix differences (or L2 norms of state differences); \
     they replace the weak-* seminorm families of the limit theorem";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    /// CSV field. Floats use the shortest round-trip form, which always
    /// contains `.`, `e`, `NaN` or `inf`, so they never parse back as integers.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:?}"),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    pub fn parse(field: &str) -> Self {
        if field.is_empty() {
            Cell::Missing
        } else if let Ok(i) = field.parse::<i64>() {
            Cell::Int(i)
        } else if let Ok(x) = field.parse::<f64>() {
            Cell::Float(x)
        } else {
            Cell::Text(field.to_string())
        }
    }

    fn order(&self, other: &Self) -> Ordering {
        let rank = |c: &Cell| match c {
            Cell::Int(_) | Cell::Float(_) => 0,
            Cell::Text(_) => 1,
            Cell::Missing => 2,
        };
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a.total_cmp(&b),
            _ => match (self, other) {
                (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
                _ => rank(self).cmp(&rank(other)),
            },
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(i64::from(b))
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Float)
    }
}

/// Rows produced by one independent run, keyed by its parameter tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRows {
    pub key: Vec<Cell>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub study: StudyKind,
    pub config_digest: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub wall_clock_seconds: f64,
    pub versions: BTreeMap<String, String>,
}

impl StudyResult {
    pub fn new(study: StudyKind, config_digest: String, columns: &[&str]) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("mfl-harness".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("format".to_string(), crate::persist::FORMAT_VERSION.to_string());
        Self {
            study,
            config_digest,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            wall_clock_seconds: 0.0,
            versions,
        }
    }

    /// Appends the rows of independent runs after sorting the runs by their
    /// parameter tuples; earlier rows are never touched.
    pub fn merge(&mut self, mut runs: Vec<RunRows>) {
        runs.sort_by(|a, b| {
            a.key
                .iter()
                .zip(&b.key)
                .map(|(x, y)| x.order(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
        for run in runs {
            for row in run.rows {
                self.push(row);
            }
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from the column list");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of `name` over rows selected by `filter`.
    pub fn values<F: Fn(&[Cell]) -> bool>(&self, name: &str, filter: F) -> Vec<f64> {
        let Some(c) = self.column(name) else { return Vec::new() };
        self.rows
            .iter()
            .filter(|r| filter(r))
            .filter_map(|r| r[c].as_f64())
            .collect()
    }

    /// The CSV document: header line then one line per row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}
