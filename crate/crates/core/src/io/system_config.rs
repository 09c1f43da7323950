use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DocumentError;

/// Per-machine settings kept apart from workflow structure, so the same
/// workflow document runs on different systems.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Default working root for runs.
    pub workdir: Option<PathBuf>,
    /// Executable location and environment per node kind.
    pub kinds: BTreeMap<String, KindConfig>,
    pub queue: Option<QueueSettings>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KindConfig {
    /// Not checked at load time; resolution happens when the node starts.
    pub executable: Option<String>,
    pub env: BTreeMap<String, String>,
    /// Prepended to the command line, e.g. `["env", "-i"]` or a module loader.
    pub prefix: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueueSettings {
    /// Only `"mock"` ships with the engine.
    pub backend: String,
    pub slots: usize,
    /// Extra time every job spends running.
    pub latency_ms: u64,
    pub poll_interval_ms: u64,
    /// Fail the first N submitted jobs.
    pub fail_first: usize,
    /// Fail every job submitted under one of these names (node paths).
    pub fail_jobs: Vec<String>,
}

impl Default for QueueSettings {
    fn default() -> Self {
        QueueSettings {
            backend: "mock".into(),
            slots: 1,
            latency_ms: 0,
            poll_interval_ms: 50,
            fail_first: 0,
            fail_jobs: Vec::new(),
        }
    }
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let config: SystemConfig = serde_json::from_str(text).map_err(DocumentError::from_json)?;
        if let Some(q) = &config.queue {
            if q.backend != "mock" {
                return Err(DocumentError::SchemaError {
                    location: "queue.backend".into(),
                    message: format!("unsupported queue backend {:?}", q.backend),
                });
            }
            if q.slots == 0 {
                return Err(DocumentError::SchemaError {
                    location: "queue.slots".into(),
                    message: "must be at least 1".into(),
                });
            }
        }
        Ok(config)
    }
}

pub fn load_system_config(path: &Path) -> Result<SystemConfig, DocumentError> {
    let text = fs::read_to_string(path).map_err(|source| DocumentError::Io {
        path: path.to_path_buf(),
        message: source.to_string(),
    })?;
    let mut config = SystemConfig::from_json(&text)?;
    if let (Some(dir), Some(workdir)) = (path.parent(), config.workdir.as_mut()) {
        if workdir.is_relative() {
            *workdir = dir.join(&*workdir);
        }
    }
    Ok(config)
}
