//! Artifact encoding: shot records, scan tables and run manifests.
//!
//! Commands build every artifact in memory first and write the set only
//! once the run has succeeded, so a failing run leaves no partial output.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atomic::RepumpScheme;
use crate::error::Result;
use crate::protocol::ShotRecord;

pub fn write_records_csv<W: Write>(out: W, records: &[ShotRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(input: R) -> Result<Vec<ShotRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_records_jsonl<W: Write>(mut out: W, records: &[ShotRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<ShotRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// One row of a shelving scan table, with the closed-form curve alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub scheme: RepumpScheme,
    pub time: f64,
    pub errors: u64,
    pub trials: u64,
    pub error_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Closed form for this scheme: both terms for 935 nm, the transient
    /// term alone for 861 nm.
    pub model: f64,
    pub model_asymptote: f64,
    pub model_transient: f64,
}

/// Minimal columns needed to fit a scan; other columns are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanInput {
    #[serde(default)]
    pub scheme: Option<RepumpScheme>,
    pub time: f64,
    pub errors: u64,
    pub trials: u64,
}

pub fn write_scan_csv<W: Write>(out: W, rows: &[ScanRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scan_csv<R: std::io::Read>(input: R) -> Result<Vec<ScanInput>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to replay a run. Free of timestamps, hostnames and
/// thread counts so that replays are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Resolved configuration, as written to `resolved.toml`.
    pub config: String,
    /// Command-specific inputs (e.g. the digest of an input file).
    pub inputs: Vec<ArtifactDigest>,
    pub artifacts: Vec<ArtifactDigest>,
}

pub fn digest(name: &str, bytes: &[u8]) -> ArtifactDigest {
    ArtifactDigest { name: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() as u64 }
}

/// Named in-memory artifacts, written out together.
#[derive(Debug, Default)]
pub struct ArtifactSet {
    items: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.items.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(n, _)| n.as_str())
    }

    pub fn digests(&self) -> Vec<ArtifactDigest> {
        self.items.iter().map(|(n, b)| digest(n, b)).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.items.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.items {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}
