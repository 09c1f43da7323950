//! Workflow documents, system configuration, command-line flag schemas and
//! graph export.

mod cli_flags;
mod document;
mod dot;
mod system_config;

use std::path::PathBuf;

pub use cli_flags::{expose_cli, Flag, FlagCollision, FlagSchema};
pub use document::{
    deserialize, from_json, load_workflow, serialize, to_json, ChannelDocument, NodeDocument,
    WorkflowDocument, FORMAT_VERSION,
};
pub use dot::export_dot;
pub use system_config::{load_system_config, KindConfig, QueueSettings, SystemConfig};

use crate::graph::GraphError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DocumentError {
    #[error("{location}: {message}")]
    SchemaError { location: String, message: String },
    #[error("unsupported document version {found} (expected {FORMAT_VERSION})")]
    VersionError { found: u32 },
    #[error("{location}: unknown node kind {kind:?}")]
    UnknownKind { location: String, kind: String },
    #[error("parameter {path} has no document representation: {value}")]
    UnserializableParameterValue { path: String, value: String },
    #[error("{location}: {source}")]
    Graph {
        location: String,
        #[source]
        source: GraphError,
    },
    #[error("cannot read {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl DocumentError {
    pub(crate) fn from_json(e: serde_json::Error) -> Self {
        DocumentError::SchemaError {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        }
    }
}
