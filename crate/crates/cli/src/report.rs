//! Structured (JSON lines) and human-readable outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A record tagged with the schema version and its record type.
#[derive(Serialize)]
pub struct Tagged<'a, T: Serialize> {
    pub schema_version: u32,
    pub record: &'a str,
    #[serde(flatten)]
    pub body: &'a T,
}

pub fn tagged<'a, T: Serialize>(record: &'a str, body: &'a T) -> Tagged<'a, T> {
    Tagged {
        schema_version: SCHEMA_VERSION,
        record,
        body,
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Data(format!("writing {}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))
}

/// One JSON document per line, in the given order.
pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(&r).map_err(|e| io_err(path, e))?);
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Pre-serialized JSON lines.
pub fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut buf = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    write_text(path, &buf)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Everything non-reproducible about a run lives here, away from the
/// structured outputs.
#[derive(Serialize)]
pub struct RunMetadata<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub argv: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub workers: usize,
    pub config: &'a C,
    pub counts: BTreeMap<&'static str, usize>,
    pub warnings: &'a [String],
}

pub fn write_metadata<C: Serialize>(dir: &Path, meta: &RunMetadata<'_, C>) -> Result<(), CliError> {
    let path = dir.join("run_metadata.json");
    let text = serde_json::to_string_pretty(meta).map_err(|e| io_err(&path, e))?;
    write_text(&path, &(text + "\n"))
}

/// Plain-text table; first column left-aligned, the rest right-aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextTable {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl fmt::Display for TextTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self
            .headers
            .len()
            .max(self.rows.iter().map(Vec::len).max().unwrap_or(0));
        let mut widths = vec![0usize; cols];
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            for (i, c) in row.iter().enumerate() {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        if !self.title.is_empty() {
            writeln!(f, "{}", self.title)?;
        }
        let line = |f: &mut fmt::Formatter<'_>, row: &[String]| -> fmt::Result {
            let mut out = String::new();
            for (i, w) in widths.iter().enumerate() {
                let cell = row.get(i).map(String::as_str).unwrap_or("");
                if i > 0 {
                    out.push_str("  ");
                }
                if i == 0 {
                    out.push_str(&format!("{cell:<w$}"));
                } else {
                    out.push_str(&format!("{cell:>w$}"));
                }
            }
            writeln!(f, "{}", out.trim_end())
        };
        line(f, &self.headers)?;
        let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        writeln!(f, "{}", "-".repeat(total))?;
        for row in &self.rows {
            line(f, row)?;
        }
        Ok(())
    }
}

/// One value per (dataset, dimension, scorer).
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub dataset_id: String,
    pub dimension: String,
    pub scorer_id: String,
    pub value: f64,
}

pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

/// Scorers as rows, one column per dataset dimension, a per-dataset AVG
/// when a dataset has several dimensions, and an overall AVG. Averages are
/// arithmetic means over the cells present in the row.
pub fn metric_grid(title: &str, cells: &[GridCell], scorer_order: &[String]) -> TextTable {
    let mut dims: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut value: BTreeMap<(&str, &str, &str), f64> = BTreeMap::new();
    for c in cells {
        dims.entry(&c.dataset_id).or_default().insert(&c.dimension);
        value.insert((&c.scorer_id, &c.dataset_id, &c.dimension), c.value);
    }
    let mut headers = vec!["scorer".to_owned()];
    for (ds, ds_dims) in &dims {
        for d in ds_dims {
            headers.push(format!("{ds}:{d}"));
        }
        if ds_dims.len() > 1 {
            headers.push(format!("{ds}:AVG"));
        }
    }
    headers.push("AVG".to_owned());

    let present: BTreeSet<&str> = cells.iter().map(|c| c.scorer_id.as_str()).collect();
    let mut rows = Vec::new();
    for scorer in scorer_order.iter().filter(|s| present.contains(s.as_str())) {
        let mut row = vec![scorer.clone()];
        let mut all = Vec::new();
        for (ds, ds_dims) in &dims {
            let mut here = Vec::new();
            for d in ds_dims {
                match value.get(&(scorer.as_str(), *ds, *d)) {
                    Some(&v) => {
                        row.push(fmt3(v));
                        here.push(v);
                    }
                    None => row.push("-".into()),
                }
            }
            if ds_dims.len() > 1 {
                row.push(mean(&here).map_or("-".into(), fmt3));
            }
            all.extend(here);
        }
        row.push(mean(&all).map_or("-".into(), fmt3));
        rows.push(row);
    }
    TextTable {
        title: title.to_owned(),
        headers,
        rows,
    }
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
