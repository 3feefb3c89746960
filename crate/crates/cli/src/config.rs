//! Versioned JSON configuration files. Every file carries `"version": 1`;
//! unknown keys are rejected by the target types.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use zsc_core::relcore::{GenConfig, IndexDef, DEFAULT_BUCKETS};

pub const CONFIG_VERSION: u64 = 1;

pub fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_versioned(&text).with_context(|| format!("config {}", path.display()))
}

pub fn parse_versioned<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    let Some(object) = value.as_object_mut() else { bail!("expected a JSON object") };
    match object.remove("version").and_then(|v| v.as_u64()) {
        Some(CONFIG_VERSION) => {}
        Some(v) => bail!("unsupported config version {v} (expected {CONFIG_VERSION})"),
        None => bail!("missing integer `version` field"),
    }
    Ok(serde_json::from_value(value)?)
}

fn default_name() -> String {
    "db".into()
}

fn default_buckets() -> usize {
    DEFAULT_BUCKETS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_buckets")]
    pub histogram_buckets: usize,
    #[serde(default)]
    pub generator: GenConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexFile {
    pub indexes: Vec<IndexDef>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use zsc_core::model::ModelConfig;

    #[test]
    fn version_is_required_and_checked() {
        let cfg: ModelConfig = parse_versioned(r#"{"version": 1, "hidden": 16}"#).unwrap();
        assert_eq!(cfg.hidden, 16);
        assert!(parse_versioned::<ModelConfig>(r#"{"hidden": 16}"#).is_err());
        assert!(parse_versioned::<ModelConfig>(r#"{"version": 2}"#).is_err());
        assert!(parse_versioned::<ModelConfig>(r#"{"version": 1, "hiden": 16}"#).is_err());
    }

    #[test]
    fn data_config_defaults() {
        let cfg: DataConfig = parse_versioned(r#"{"version": 1}"#).unwrap();
        assert_eq!(cfg.name, "db");
        assert_eq!(cfg.histogram_buckets, DEFAULT_BUCKETS);
    }
}
