//! Declarative workflow documents. JSON is the canonical encoding: struct
//! fields keep a fixed order and every map is sorted, so serializing the
//! same workflow always yields the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DocumentError;
use crate::graph::{ParamTarget, ParamValue, PortType, Workflow, DEFAULT_CAPACITY};
use crate::registry::{NodeRegistry, RegistryError};

pub const FORMAT_VERSION: u32 = 1;

/// A workflow level. `version` is present only at the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    pub name: String,
    #[serde(default)]
    pub nodes: Vec<NodeDocument>,
    #[serde(default)]
    pub subgraphs: Vec<WorkflowDocument>,
    #[serde(default)]
    pub channels: Vec<ChannelDocument>,
    /// Exposed parameter name -> `"node/path.param"` targets.
    #[serde(default)]
    pub expose: BTreeMap<String, Vec<String>>,
    /// Boundary port alias -> inner port path.
    #[serde(default)]
    pub ports: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDocument {
    pub name: String,
    pub kind: String,
    /// Absent means the kind's default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub looped: Option<bool>,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default)]
    pub parameters: BTreeMap<String, ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDocument {
    pub from: String,
    pub to: String,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

pub fn serialize(workflow: &Workflow) -> Result<WorkflowDocument, DocumentError> {
    let mut doc = serialize_level(workflow, "")?;
    doc.version = Some(FORMAT_VERSION);
    Ok(doc)
}

fn serialize_level(wf: &Workflow, prefix: &str) -> Result<WorkflowDocument, DocumentError> {
    let join = |name: &str| {
        if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}/{name}")
        }
    };
    let mut nodes = Vec::new();
    for node in wf.nodes() {
        let mut parameters = BTreeMap::new();
        for p in &node.parameters {
            if let Some(v) = &p.value {
                if !v.is_serializable() {
                    return Err(DocumentError::UnserializableParameterValue {
                        path: format!("{}.{}", join(&node.name), p.name),
                        value: format!("{v:?}"),
                    });
                }
                parameters.insert(p.name.clone(), v.clone());
            }
        }
        nodes.push(NodeDocument {
            name: node.name.clone(),
            kind: node.kind.clone(),
            looped: Some(node.looped),
            max_retries: node.max_retries,
            parameters,
        });
    }
    let subgraphs = wf
        .subgraphs()
        .iter()
        .map(|s| serialize_level(s, &join(&s.name)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WorkflowDocument {
        version: None,
        name: wf.name.clone(),
        nodes,
        subgraphs,
        channels: wf
            .channels()
            .iter()
            .map(|c| ChannelDocument {
                from: c.source.clone(),
                to: c.target.clone(),
                capacity: c.capacity,
            })
            .collect(),
        expose: wf
            .exposed_parameters()
            .iter()
            .map(|(k, ts)| (k.clone(), ts.iter().map(ToString::to_string).collect()))
            .collect(),
        ports: wf.exposed_ports().clone(),
    })
}

/// Canonical text form.
pub fn to_json(doc: &WorkflowDocument) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("documents always serialize");
    text.push('\n');
    text
}

pub fn from_json(text: &str) -> Result<WorkflowDocument, DocumentError> {
    serde_json::from_str(text).map_err(DocumentError::from_json)
}

pub fn deserialize(
    doc: &WorkflowDocument,
    registry: &NodeRegistry,
) -> Result<Workflow, DocumentError> {
    match doc.version {
        Some(FORMAT_VERSION) => {}
        Some(found) => return Err(DocumentError::VersionError { found }),
        None => {
            return Err(DocumentError::SchemaError {
                location: "version".into(),
                message: format!("missing field `version` (expected {FORMAT_VERSION})"),
            })
        }
    }
    deserialize_level(doc, registry, "")
}

fn deserialize_level(
    doc: &WorkflowDocument,
    registry: &NodeRegistry,
    at: &str,
) -> Result<Workflow, DocumentError> {
    let loc = |rest: String| {
        if at.is_empty() {
            rest
        } else {
            format!("{at}.{rest}")
        }
    };
    let graph_err = |location: String| move |source| DocumentError::Graph { location, source };

    let mut wf = Workflow::new(doc.name.clone());
    for (i, n) in doc.nodes.iter().enumerate() {
        let location = loc(format!("nodes[{i}]"));
        let mut spec = registry
            .declare(&n.kind, &n.name, &n.parameters)
            .map_err(|e| match e {
                RegistryError::UnknownKind { kind, node } => DocumentError::UnknownKind {
                    location: format!("{location} ({node})"),
                    kind,
                },
                RegistryError::Declare { message, .. } => DocumentError::SchemaError {
                    location: location.clone(),
                    message,
                },
                RegistryError::Graph(source) => DocumentError::Graph {
                    location: location.clone(),
                    source,
                },
            })?;
        if let Some(looped) = n.looped {
            spec.looped = looped;
        }
        spec.max_retries = n.max_retries;
        wf.add_node(spec).map_err(graph_err(location))?;
    }
    for (i, s) in doc.subgraphs.iter().enumerate() {
        if s.version.is_some() {
            return Err(DocumentError::SchemaError {
                location: loc(format!("subgraphs[{i}].version")),
                message: "only the top level carries a version".into(),
            });
        }
        let sub = deserialize_level(s, registry, &loc(format!("subgraphs[{i}]")))?;
        wf.add_subgraph(sub)
            .map_err(graph_err(loc(format!("subgraphs[{i}]"))))?;
    }
    for (alias, inner) in &doc.ports {
        wf.expose_port(alias, inner)
            .map_err(graph_err(loc(format!("ports.{alias}"))))?;
    }
    for (i, c) in doc.channels.iter().enumerate() {
        for (field, path) in [("from", &c.from), ("to", &c.to)] {
            if wf.resolve_port(path).is_err() {
                return Err(DocumentError::SchemaError {
                    location: loc(format!("channels[{i}].{field}")),
                    message: format!("no port at {path:?}"),
                });
            }
        }
        wf.connect(&c.from, &c.to, c.capacity)
            .map_err(graph_err(loc(format!("channels[{i}]"))))?;
    }
    for (name, targets) in &doc.expose {
        let location = loc(format!("expose.{name}"));
        let parsed = targets
            .iter()
            .map(|t| ParamTarget::parse(t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(graph_err(location.clone()))?;
        if parsed.is_empty() {
            return Err(DocumentError::SchemaError {
                location,
                message: "exposed parameter without targets".into(),
            });
        }
        for t in &parsed {
            wf.resolve_parameter(t).map_err(graph_err(location.clone()))?;
        }
        // Names come from the document verbatim; the flag schema catches
        // names that clash on the command line.
        wf.insert_exposed_parameter_unchecked(name.clone(), parsed);
    }
    Ok(wf)
}

/// Reads a document from disk. Relative `path` parameters are resolved
/// against the document's directory.
pub fn load_workflow(path: &Path, registry: &NodeRegistry) -> Result<Workflow, DocumentError> {
    let text = fs::read_to_string(path).map_err(|source| DocumentError::Io {
        path: path.to_path_buf(),
        message: source.to_string(),
    })?;
    let mut wf = deserialize(&from_json(&text)?, registry)?;
    if let Some(base) = path.parent() {
        resolve_paths(&mut wf, base);
    }
    Ok(wf)
}

fn resolve_paths(wf: &mut Workflow, base: &Path) {
    let path_type = PortType::tag("path");
    let leaves: Vec<String> = wf.leaves().into_iter().map(|(p, _)| p).collect();
    for leaf in leaves {
        let Some(node) = wf.node_at_mut(&leaf) else {
            continue;
        };
        for p in &mut node.parameters {
            if p.value_type != path_type {
                continue;
            }
            if let Some(ParamValue::Str(s)) = &mut p.value {
                if Path::new(s.as_str()).is_relative() {
                    *s = base.join(s.as_str()).display().to_string();
                }
            }
        }
    }
}
