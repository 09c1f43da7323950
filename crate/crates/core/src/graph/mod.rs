//! Static workflow structure: nodes, ports, parameters, subgraphs and the
//! channel edges between them.
//!
//! A [`Workflow`] is a tree. Leaves are [`NodeSpec`]s, interior nodes are
//! nested workflows (subgraphs). Ports are addressed by slash-delimited
//! paths such as `"sub/node.port"`; a subgraph may expose boundary ports
//! under an alias so `"sub.inp"` resolves to one of its inner ports.

mod types;
mod validate;
mod workflow;

pub use types::{
    ChannelId, ChannelLink, Direction, NodeSpec, ParamValue, Parameter, Port, PortType,
};
pub use validate::{Issue, Severity, ValidationReport};
pub use workflow::{ChannelEdge, FlatEdge, FlatGraph, NodeHandle, ParamTarget, Workflow};

/// Capacity used when a connection does not specify one.
pub const DEFAULT_CAPACITY: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("name {0:?} is already used")]
    DuplicateName(String),
    #[error("invalid identifier {0:?}")]
    InvalidName(String),
    #[error("subgraph {0:?} is already part of this tree")]
    CycleInTree(String),
    #[error("no node or subgraph at {0:?}")]
    UnknownNode(String),
    #[error("no port at {0:?}")]
    UnknownPort(String),
    #[error("malformed port path {0:?} (expected \"node/path.port\")")]
    BadPath(String),
    #[error("node {node:?} has no parameter {parameter:?}")]
    UnknownParameter { node: String, parameter: String },
    #[error("parameter {parameter:?} expects {expected}, got {value}")]
    ParameterType {
        parameter: String,
        expected: String,
        value: String,
    },
    #[error("cannot connect {source_path} ({source_type}) to {target} ({target_type}): incompatible types")]
    TypeMismatch {
        source_path: String,
        target: String,
        source_type: String,
        target_type: String,
    },
    #[error("port {0:?} is already connected")]
    AlreadyConnected(String),
    #[error("port {path:?} is not an {expected} port")]
    DirectionError { path: String, expected: Direction },
    #[error("channel capacity must be positive")]
    InvalidCapacity,
    #[error("pair {index}: {source}")]
    InPair {
        index: usize,
        #[source]
        source: Box<GraphError>,
    },
    #[error("no compatible port pair between {0:?} and {1:?}")]
    NoMatch(String, String),
    #[error("{count} compatible port pairs between {a:?} and {b:?}; connect explicitly")]
    Ambiguous { a: String, b: String, count: usize },
    #[error("unknown parameter target {0:?}")]
    UnknownTarget(String),
    #[error("mapped parameters have different types: {0:?}")]
    HeterogeneousTypes(Vec<String>),
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Input => "input",
            Direction::Output => "output",
        })
    }
}

/// Identifiers for nodes, subgraphs, ports and parameters.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Splits `"a/b.port"` into `("a/b", "port")`.
pub fn split_port_path(path: &str) -> Result<(&str, &str), GraphError> {
    match path.rsplit_once('.') {
        Some((node, port)) if !node.is_empty() && !port.is_empty() => Ok((node, port)),
        _ => Err(GraphError::BadPath(path.to_string())),
    }
}
