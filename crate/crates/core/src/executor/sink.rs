//! `sample_v1` files: one header line carrying the catalog, then one
//! executed plan per line.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CostWeights;
use crate::planner::PhysicalPlan;
use crate::relcore::Catalog;
use crate::{Error, Result};

pub const SAMPLE_FORMAT: &str = "sample_v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFileHeader {
    pub format: String,
    pub database: String,
    pub weights: CostWeights,
    pub catalog: Catalog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub query_id: String,
    pub database: String,
    /// Plan annotated with estimates, analytic cost and actuals.
    pub plan: PhysicalPlan,
    pub cost_units: f64,
    pub values: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

pub fn write_samples(path: &Path, header: &SampleFileHeader, records: &[SampleRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = |v: String| writeln!(w, "{v}").map_err(|e| Error::io(path, e));
    line(serde_json::to_string(header)?)?;
    for r in records {
        line(serde_json::to_string(r)?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<(SampleFileHeader, Vec<SampleRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty sample file"))?
        .map_err(|e| Error::io(path, e))?;
    let header: SampleFileHeader =
        serde_json::from_str(&first).map_err(|e| Error::format(path, format!("header: {e}")))?;
    if header.format != SAMPLE_FORMAT {
        return Err(Error::format(path, format!("expected {SAMPLE_FORMAT}, found {}", header.format)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: SampleRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 2)))?;
        records.push(r);
    }
    Ok((header, records))
}
