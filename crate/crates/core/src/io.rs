//! Artifact I/O helpers.
//!
//! Every CSV artifact written by the pipeline starts with a comment line
//! `# config_hash=<sha256>` so downstream stages can detect inputs produced
//! under a different configuration and refuse to run on them.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const HASH_PREFIX: &str = "# config_hash=";

/// Writes `rows` as CSV at `path` with a leading config-hash comment line.
pub fn write_csv<T: Serialize>(path: &Path, config_hash: &str, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut file = fs::File::create(path)?;
    writeln!(file, "{HASH_PREFIX}{config_hash}")?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a hash-stamped CSV, returning the rows and the recorded hash.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, String)> {
    let file = fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let hash = first
        .trim_end()
        .strip_prefix(HASH_PREFIX)
        .ok_or_else(|| {
            Error::parse(
                path,
                format!("expected leading `{HASH_PREFIX}...` comment line"),
            )
        })?
        .to_string();
    let mut rows = Vec::new();
    let mut r = csv::Reader::from_reader(reader);
    for rec in r.deserialize() {
        let row: T = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        rows.push(row);
    }
    Ok((rows, hash))
}

/// Reads a hash-stamped CSV and fails with a stale-artifact error when the
/// recorded hash differs from `expected_hash`.
pub fn read_csv_checked<T: DeserializeOwned>(path: &Path, expected_hash: &str) -> Result<Vec<T>> {
    let (rows, hash) = read_csv(path)?;
    if hash != expected_hash {
        return Err(Error::StaleArtifact(format!(
            "{} was produced under config hash {hash}, current is {expected_hash}; \
             re-run the producing stage",
            path.display()
        )));
    }
    Ok(rows)
}

/// Plain CSV reader (no hash line) for user-supplied inputs.
pub fn read_plain_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut rows = Vec::new();
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    for rec in r.deserialize() {
        let row: T = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e.to_string()))
}
