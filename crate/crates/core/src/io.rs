//! CSV and JSON output with schema headers.
//!
//! CSV files start with one comment line
//! `# schema_version=1 kind=<kind> seed=<seed>` followed by the column header.
//! JSON documents carry `schema_version` and `seed` at the top level.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::SCHEMA_VERSION;
use crate::error::Result;

/// A numeric table destined for one CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Table { kind: kind.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Renders a table to CSV bytes.
pub fn csv_bytes(table: &Table, seed: u64) -> Result<Vec<u8>> {
    let mut buf = format!("# schema_version={SCHEMA_VERSION} kind={} seed={seed}\n", table.kind).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
    }
    Ok(buf)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `<dir>/<kind>.csv` and returns (path, sha256).
pub fn write_csv(dir: &Path, table: &Table, seed: u64) -> Result<(PathBuf, String)> {
    fs::create_dir_all(dir)?;
    let bytes = csv_bytes(table, seed)?;
    let path = dir.join(format!("{}.csv", table.kind));
    fs::write(&path, &bytes)?;
    Ok((path, sha256_hex(&bytes)))
}

/// Wraps `body` with the schema header and writes `<dir>/<name>.json`.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, seed: u64, body: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "body": serde_json::to_value(body)?,
    });
    let path = dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Reads back a JSON document written by [`write_json`].
pub fn read_json(path: &Path) -> Result<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes every non-empty table. Returns the written paths with checksums;
/// with nothing to write, returns an empty list and a warning.
pub fn emit_plot_data(dir: &Path, tables: &[Table], seed: u64) -> Result<(Vec<(PathBuf, String)>, Option<String>)> {
    let live: Vec<&Table> = tables.iter().filter(|t| !t.is_empty()).collect();
    if live.is_empty() {
        return Ok((vec![], Some("no plot data to write".to_string())));
    }
    let mut out = vec![];
    for t in live {
        out.push(write_csv(dir, t, seed)?);
    }
    Ok((out, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_schema_header() {
        let mut t = Table::new("demo", &["x", "y"]);
        t.push(vec![1.0, 0.5]);
        let text = String::from_utf8(csv_bytes(&t, 7).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# schema_version=1 kind=demo seed=7"));
        assert_eq!(lines.next(), Some("x,y"));
        assert_eq!(lines.next(), Some("1e0,5e-1"));
    }

    #[test]
    fn empty_results_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let (written, warning) = emit_plot_data(dir.path(), &[Table::new("empty", &["a"])], 0).unwrap();
        assert!(written.is_empty());
        assert!(warning.is_some());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_json(dir.path(), "r", 3, &json!({"a": 1.5})).unwrap();
        let v = read_json(&p).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["seed"], 3);
        assert_eq!(v["body"]["a"], 1.5);
    }
}
