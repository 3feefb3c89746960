//! `model_v1` checkpoints: a magic line, a one-line JSON header describing
//! config, feature schema and tensor layout, then the parameters as
//! little-endian doubles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CostModel, Layout, ModelConfig};
use crate::encoding::FeatureSchema;
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "model_v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Byte offset of the weights inside the data section; the bias follows.
    byte_offset: usize,
    byte_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    config: ModelConfig,
    schema: FeatureSchema,
    param_count: usize,
    tensors: Vec<TensorEntry>,
}

fn entries(layout: &Layout) -> Vec<TensorEntry> {
    layout
        .tensors()
        .into_iter()
        .map(|(name, d)| TensorEntry {
            name,
            shape: [d.input, d.output],
            byte_offset: d.offset * 8,
            byte_len: (d.input + 1) * d.output * 8,
        })
        .collect()
}

impl CostModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format: MODEL_FORMAT.to_string(),
            config: self.config.clone(),
            schema: self.schema.clone(),
            param_count: self.params.len(),
            tensors: entries(&self.layout),
        };
        let mut out = format!("{MODEL_FORMAT}\n{}\n", serde_json::to_string(&header)?).into_bytes();
        out.reserve(self.params.len() * 8);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CostModel> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing magic line"))?;
        if &bytes[..nl] != MODEL_FORMAT.as_bytes() {
            return Err(bad("not a model_v1 checkpoint"));
        }
        let rest = &bytes[nl + 1..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header: Header = serde_json::from_slice(&rest[..nl]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let data = &rest[nl + 1..];
        if header.format != MODEL_FORMAT {
            return Err(bad("header format mismatch"));
        }
        header.config.validate()?;
        let layout = Layout::new(&header.schema, header.config.hidden);
        if layout.len != header.param_count || entries(&layout) != header.tensors {
            return Err(bad("tensor layout does not match config and schema"));
        }
        if data.len() != header.param_count * 8 {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                header.param_count * 8,
                data.len()
            )));
        }
        let params: Vec<f64> =
            data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(CostModel { config: header.config, schema: header.schema, layout, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CostModel> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        CostModel::from_bytes(&bytes)
    }

    /// Loads and checks that the checkpoint matches the expected hidden
    /// size and feature schema.
    pub fn load_expecting(path: &Path, config: &ModelConfig, schema: &FeatureSchema) -> Result<CostModel> {
        let m = CostModel::load(path)?;
        if m.config.hidden != config.hidden {
            return Err(Error::SchemaMismatch {
                expected: format!("hidden dimension {}", config.hidden),
                found: format!("hidden dimension {}", m.config.hidden),
            });
        }
        m.check_schema(schema)?;
        Ok(m)
    }
}
