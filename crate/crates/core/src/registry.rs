//! Node-kind registry: maps a kind name to its port/parameter declaration
//! and to the factory building a fresh body for each launched node.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::graph::{GraphError, NodeSpec, ParamValue};
use crate::runtime::{NodeBody, NodeError};

/// Declares a node of this kind. Receives the node name and the parameter
/// values assigned so far, since some kinds derive their ports from
/// parameters (e.g. the number of `Merge` inputs).
pub type DeclareFn =
    dyn Fn(&str, &BTreeMap<String, ParamValue>) -> Result<NodeSpec, String> + Send + Sync;

pub type BuildFn = dyn Fn(&NodeSpec) -> Result<Box<dyn NodeBody>, NodeError> + Send + Sync;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown node kind {kind:?} (node {node:?})")]
    UnknownKind { kind: String, node: String },
    #[error("cannot declare {kind} node {node:?}: {message}")]
    Declare {
        kind: String,
        node: String,
        message: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone)]
pub struct NodeKind {
    pub name: String,
    declare: Arc<DeclareFn>,
    build: Arc<BuildFn>,
}

impl fmt::Debug for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeKind").field("name", &self.name).finish()
    }
}

#[derive(Clone, Default, Debug)]
pub struct NodeRegistry {
    kinds: BTreeMap<String, NodeKind>,
}

impl NodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with the built-in node library.
    pub fn with_std() -> Self {
        let mut r = Self::new();
        crate::nodes::register_std(&mut r);
        r
    }

    pub fn register<D, B>(&mut self, kind: &str, declare: D, build: B)
    where
        D: Fn(&str, &BTreeMap<String, ParamValue>) -> Result<NodeSpec, String>
            + Send
            + Sync
            + 'static,
        B: Fn(&NodeSpec) -> Result<Box<dyn NodeBody>, NodeError> + Send + Sync + 'static,
    {
        self.kinds.insert(
            kind.to_string(),
            NodeKind {
                name: kind.to_string(),
                declare: Arc::new(declare),
                build: Arc::new(build),
            },
        );
    }

    /// Registers a kind with a fixed interface, given as a template spec.
    pub fn register_template<B>(&mut self, template: NodeSpec, build: B)
    where
        B: Fn(&NodeSpec) -> Result<Box<dyn NodeBody>, NodeError> + Send + Sync + 'static,
    {
        let kind = template.kind.clone();
        self.register(
            &kind,
            move |name, _| Ok(template.clone().named(name)),
            build,
        );
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.kinds.contains_key(kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.kinds.keys().map(String::as_str)
    }

    /// Declares a node and applies `assigned` parameter values to it.
    pub fn declare(
        &self,
        kind: &str,
        name: &str,
        assigned: &BTreeMap<String, ParamValue>,
    ) -> Result<NodeSpec, RegistryError> {
        let entry = self.kinds.get(kind).ok_or_else(|| RegistryError::UnknownKind {
            kind: kind.to_string(),
            node: name.to_string(),
        })?;
        let mut spec = (entry.declare)(name, assigned).map_err(|message| RegistryError::Declare {
            kind: kind.to_string(),
            node: name.to_string(),
            message,
        })?;
        spec.kind = kind.to_string();
        spec.name = name.to_string();
        for (param, value) in assigned {
            spec.set(param, value.clone())?;
        }
        Ok(spec)
    }

    /// Shorthand for declaring with a list of parameter assignments.
    pub fn spec<K: Into<String>, V: Into<ParamValue>>(
        &self,
        kind: &str,
        name: &str,
        params: impl IntoIterator<Item = (K, V)>,
    ) -> Result<NodeSpec, RegistryError> {
        let assigned: BTreeMap<String, ParamValue> = params
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        self.declare(kind, name, &assigned)
    }

    pub fn build(&self, spec: &NodeSpec) -> Result<Box<dyn NodeBody>, NodeError> {
        let entry = self
            .kinds
            .get(&spec.kind)
            .ok_or_else(|| NodeError::fatal(format!("unknown node kind {:?}", spec.kind)))?;
        (entry.build)(spec)
    }
}
