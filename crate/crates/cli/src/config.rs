//! One JSON config file with a section per concern, plus `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use valmetric_core::pipeline::PipelineConfig;
use valmetric_core::studies::{StudyConfig, SweepSpec};
use valmetric_core::universe::UniverseConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub repeats: usize,
    pub sweeps: Vec<SweepSpec>,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            repeats: 50,
            sweeps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub store: PathBuf,
    pub addr: String,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            store: PathBuf::from("sessions"),
            addr: "127.0.0.1:8080".into(),
            ui_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub universe: UniverseConfig,
    pub pipeline: PipelineConfig,
    pub study: StudySection,
    pub service: ServiceSection,
}

impl AppConfig {
    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            universe: self.universe.clone(),
            pipeline: self.pipeline.clone(),
            repeats: self.study.repeats,
            sweeps: self.study.sweeps.clone(),
        }
    }
}

/// `a.b.c=value`; the value is parsed as JSON, falling back to a string.
fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::config(format!("override `{path}`: `{}` is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one key")
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<AppConfig, CliError> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    for spec in overrides {
        apply_override(&mut root, spec)?;
    }
    let config: AppConfig = serde_json::from_value(root).map_err(|e| CliError::config(format!("config: {e}")))?;
    config.pipeline.validate()?;
    Ok(config)
}
