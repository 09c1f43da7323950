use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{
    is_identifier, split_port_path, ChannelId, ChannelLink, Direction, GraphError, NodeSpec,
    ParamValue, Parameter, Port, PortType, DEFAULT_CAPACITY,
};

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

fn next_instance() -> u64 {
    NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEdge {
    pub id: ChannelId,
    pub source: String,
    pub target: String,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamTarget {
    pub node: String,
    pub parameter: String,
}

impl ParamTarget {
    pub fn new(node: impl Into<String>, parameter: impl Into<String>) -> Self {
        ParamTarget {
            node: node.into(),
            parameter: parameter.into(),
        }
    }

    /// Parses `"node/path.param"`.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let (node, parameter) = split_port_path(text)?;
        Ok(ParamTarget::new(node, parameter))
    }
}

impl std::fmt::Display for ParamTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.node, self.parameter)
    }
}

/// Path-based handle to a node or subgraph inside a workflow.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeHandle {
    pub path: String,
}

impl NodeHandle {
    pub fn port(&self, name: &str) -> String {
        format!("{}.{}", self.path, name)
    }

    pub fn param(&self, name: &str) -> String {
        format!("{}.{}", self.path, name)
    }

    pub fn child(&self, name: &str) -> NodeHandle {
        NodeHandle {
            path: format!("{}/{}", self.path, name),
        }
    }
}

impl AsRef<str> for NodeHandle {
    fn as_ref(&self) -> &str {
        &self.path
    }
}

/// Hierarchical workflow: the root is the full graph, nested workflows are
/// subgraphs, and leaves are individual computation steps.
#[derive(Debug, Clone)]
pub struct Workflow {
    pub name: String,
    nodes: Vec<NodeSpec>,
    subgraphs: Vec<Workflow>,
    channels: Vec<ChannelEdge>,
    exposed_parameters: BTreeMap<String, Vec<ParamTarget>>,
    exposed_ports: BTreeMap<String, String>,
    instance: u64,
}

impl PartialEq for Workflow {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.nodes == other.nodes
            && self.subgraphs == other.subgraphs
            && self.channels == other.channels
            && self.exposed_parameters == other.exposed_parameters
            && self.exposed_ports == other.exposed_ports
    }
}

/// A leaf-level channel with both endpoints resolved to absolute node paths.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatEdge {
    pub id: String,
    pub source_node: String,
    pub source_port: String,
    pub target_node: String,
    pub target_port: String,
    pub capacity: usize,
    pub port_type: PortType,
}

#[derive(Debug, Clone)]
pub struct FlatGraph<'a> {
    pub nodes: Vec<(String, &'a NodeSpec)>,
    pub edges: Vec<FlatEdge>,
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

impl Workflow {
    pub fn new(name: impl Into<String>) -> Self {
        Workflow {
            name: name.into(),
            nodes: Vec::new(),
            subgraphs: Vec::new(),
            channels: Vec::new(),
            exposed_parameters: BTreeMap::new(),
            exposed_ports: BTreeMap::new(),
            instance: next_instance(),
        }
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn subgraphs(&self) -> &[Workflow] {
        &self.subgraphs
    }

    pub fn channels(&self) -> &[ChannelEdge] {
        &self.channels
    }

    pub fn exposed_parameters(&self) -> &BTreeMap<String, Vec<ParamTarget>> {
        &self.exposed_parameters
    }

    pub fn exposed_ports(&self) -> &BTreeMap<String, String> {
        &self.exposed_ports
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.subgraphs.is_empty()
    }

    fn name_taken(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n.name == name) || self.subgraphs.iter().any(|s| s.name == name)
    }

    pub fn add_node(&mut self, spec: NodeSpec) -> Result<NodeHandle, GraphError> {
        if !is_identifier(&spec.name) {
            return Err(GraphError::InvalidName(spec.name));
        }
        if self.name_taken(&spec.name) {
            return Err(GraphError::DuplicateName(spec.name));
        }
        spec.check_unique_names()?;
        let path = spec.name.clone();
        self.nodes.push(spec);
        Ok(NodeHandle { path })
    }

    pub fn add_subgraph(&mut self, sub: Workflow) -> Result<NodeHandle, GraphError> {
        if !is_identifier(&sub.name) {
            return Err(GraphError::InvalidName(sub.name));
        }
        if self.name_taken(&sub.name) {
            return Err(GraphError::DuplicateName(sub.name));
        }
        let mut mine = Vec::new();
        self.collect_instances(&mut mine);
        let mut theirs = Vec::new();
        sub.collect_instances(&mut theirs);
        let mut sorted = theirs.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != theirs.len() || theirs.iter().any(|id| mine.contains(id)) {
            return Err(GraphError::CycleInTree(sub.name));
        }
        let path = sub.name.clone();
        self.subgraphs.push(sub);
        Ok(NodeHandle { path })
    }

    fn collect_instances(&self, out: &mut Vec<u64>) {
        out.push(self.instance);
        for s in &self.subgraphs {
            s.collect_instances(out);
        }
    }

    /// Deep copy with fresh tree identities, so it can be added alongside
    /// the original.
    pub fn fresh_copy(&self) -> Workflow {
        let mut copy = self.clone();
        copy.renew_instances();
        copy
    }

    fn renew_instances(&mut self) {
        self.instance = next_instance();
        for s in &mut self.subgraphs {
            s.renew_instances();
        }
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn subgraph(&self, name: &str) -> Option<&Workflow> {
        self.subgraphs.iter().find(|s| s.name == name)
    }

    fn subgraph_mut(&mut self, name: &str) -> Option<&mut Workflow> {
        self.subgraphs.iter_mut().find(|s| s.name == name)
    }

    /// Leaf node at a slash-delimited path.
    pub fn node_at(&self, path: &str) -> Option<&NodeSpec> {
        let (parent, leaf) = match path.rsplit_once('/') {
            Some((parent, leaf)) => (self.workflow_at(parent)?, leaf),
            None => (self, path),
        };
        parent.node(leaf)
    }

    pub fn node_at_mut(&mut self, path: &str) -> Option<&mut NodeSpec> {
        let (parent, leaf) = match path.rsplit_once('/') {
            Some((parent, leaf)) => (self.workflow_at_mut(parent)?, leaf),
            None => (self, path),
        };
        parent.nodes.iter_mut().find(|n| n.name == leaf)
    }

    /// Subgraph at a slash-delimited path (empty path is `self`).
    pub fn workflow_at(&self, path: &str) -> Option<&Workflow> {
        if path.is_empty() {
            return Some(self);
        }
        let mut wf = self;
        for seg in path.split('/') {
            wf = wf.subgraph(seg)?;
        }
        Some(wf)
    }

    fn workflow_at_mut(&mut self, path: &str) -> Option<&mut Workflow> {
        if path.is_empty() {
            return Some(self);
        }
        let mut wf = self;
        for seg in path.split('/') {
            wf = wf.subgraph_mut(seg)?;
        }
        Some(wf)
    }

    /// Resolves a port path, following subgraph port aliases, to the leaf
    /// node path (relative to `self`) and the leaf's port name.
    pub fn resolve_port(&self, path: &str) -> Result<(String, String), GraphError> {
        let (node_path, port) = split_port_path(path)?;
        let segs: Vec<&str> = node_path.split('/').collect();
        let mut wf = self;
        let mut prefix = String::new();
        for (i, seg) in segs.iter().enumerate() {
            if i + 1 < segs.len() {
                wf = wf
                    .subgraph(seg)
                    .ok_or_else(|| GraphError::UnknownNode(node_path.to_string()))?;
                prefix = join(&prefix, seg);
                continue;
            }
            if let Some(node) = wf.node(seg) {
                if node.port(port).is_none() {
                    return Err(GraphError::UnknownPort(path.to_string()));
                }
                return Ok((join(&prefix, seg), port.to_string()));
            }
            if let Some(sub) = wf.subgraph(seg) {
                let inner = sub
                    .exposed_ports
                    .get(port)
                    .ok_or_else(|| GraphError::UnknownPort(path.to_string()))?;
                let (leaf, leaf_port) = sub.resolve_port(inner)?;
                return Ok((join(&join(&prefix, seg), &leaf), leaf_port));
            }
            return Err(GraphError::UnknownNode(node_path.to_string()));
        }
        Err(GraphError::BadPath(path.to_string()))
    }

    pub fn port_at(&self, path: &str) -> Result<&Port, GraphError> {
        let (node, port) = self.resolve_port(path)?;
        self.node_at(&node)
            .and_then(|n| n.port(&port))
            .ok_or_else(|| GraphError::UnknownPort(path.to_string()))
    }

    fn port_at_mut(&mut self, path: &str) -> Result<&mut Port, GraphError> {
        let (node, port) = self.resolve_port(path)?;
        self.node_at_mut(&node)
            .and_then(|n| n.port_mut(&port))
            .ok_or_else(|| GraphError::UnknownPort(path.to_string()))
    }

    /// Declares a boundary port of this (sub)workflow.
    pub fn expose_port(&mut self, alias: &str, inner: &str) -> Result<(), GraphError> {
        if !is_identifier(alias) {
            return Err(GraphError::InvalidName(alias.to_string()));
        }
        if self.exposed_ports.contains_key(alias) {
            return Err(GraphError::DuplicateName(alias.to_string()));
        }
        self.resolve_port(inner)?;
        self.exposed_ports.insert(alias.to_string(), inner.to_string());
        Ok(())
    }

    pub fn connect(
        &mut self,
        source: &str,
        target: &str,
        capacity: usize,
    ) -> Result<ChannelId, GraphError> {
        if capacity == 0 {
            return Err(GraphError::InvalidCapacity);
        }
        let (src_node, _) = self.resolve_port(source)?;
        let (dst_node, _) = self.resolve_port(target)?;
        let src = self.port_at(source)?;
        let dst = self.port_at(target)?;
        if src.direction != Direction::Output {
            return Err(GraphError::DirectionError {
                path: source.to_string(),
                expected: Direction::Output,
            });
        }
        if dst.direction != Direction::Input {
            return Err(GraphError::DirectionError {
                path: target.to_string(),
                expected: Direction::Input,
            });
        }
        if src.is_connected() {
            return Err(GraphError::AlreadyConnected(source.to_string()));
        }
        if dst.is_connected() {
            return Err(GraphError::AlreadyConnected(target.to_string()));
        }
        if !src.port_type.compatible(&dst.port_type) {
            return Err(GraphError::TypeMismatch {
                source_path: source.to_string(),
                target: target.to_string(),
                source_type: src.port_type.to_string(),
                target_type: dst.port_type.to_string(),
            });
        }
        let id = ChannelId(self.channels.len());
        let depth = |node: &str| node.matches('/').count();
        self.port_at_mut(source)?.connected = Some(ChannelLink {
            levels_up: depth(&src_node),
            id,
        });
        self.port_at_mut(target)?.connected = Some(ChannelLink {
            levels_up: depth(&dst_node),
            id,
        });
        self.channels.push(ChannelEdge {
            id,
            source: source.to_string(),
            target: target.to_string(),
            capacity,
        });
        Ok(id)
    }

    /// Connects every pair with the default capacity. All-or-nothing: on
    /// error the workflow is left unchanged.
    pub fn connect_all<S: AsRef<str>, T: AsRef<str>>(
        &mut self,
        pairs: &[(S, T)],
    ) -> Result<Vec<ChannelId>, GraphError> {
        let mut staged = self.clone();
        let mut ids = Vec::with_capacity(pairs.len());
        for (index, (s, t)) in pairs.iter().enumerate() {
            let id = staged
                .connect(s.as_ref(), t.as_ref(), DEFAULT_CAPACITY)
                .map_err(|e| GraphError::InPair {
                    index,
                    source: Box::new(e),
                })?;
            ids.push(id);
        }
        *self = staged;
        Ok(ids)
    }

    /// Boundary ports of a leaf node or subgraph, keyed by the name used to
    /// address them from this level.
    pub fn interface(&self, path: &str) -> Result<Vec<(String, Port)>, GraphError> {
        if let Some(node) = self.node_at(path) {
            return Ok(node.ports.iter().map(|p| (p.name.clone(), p.clone())).collect());
        }
        let sub = self
            .workflow_at(path)
            .filter(|_| !path.is_empty())
            .ok_or_else(|| GraphError::UnknownNode(path.to_string()))?;
        sub.exposed_ports
            .iter()
            .map(|(alias, inner)| Ok((alias.clone(), sub.port_at(inner)?.clone())))
            .collect()
    }

    /// Connects the single unconnected output of `a` and input of `b` whose
    /// (non-wildcard) types match.
    pub fn auto_connect(&mut self, a: &str, b: &str) -> Result<ChannelId, GraphError> {
        let outs = self.interface(a)?;
        let ins = self.interface(b)?;
        let mut candidates = Vec::new();
        for (out_name, out) in outs.iter().filter(|(_, p)| p.direction == Direction::Output) {
            for (in_name, inp) in ins.iter().filter(|(_, p)| p.direction == Direction::Input) {
                if out.is_connected() || inp.is_connected() {
                    continue;
                }
                if out.port_type.is_wildcard() || inp.port_type.is_wildcard() {
                    continue;
                }
                if out.port_type == inp.port_type {
                    candidates.push((format!("{a}.{out_name}"), format!("{b}.{in_name}")));
                }
            }
        }
        match candidates.len() {
            0 => Err(GraphError::NoMatch(a.to_string(), b.to_string())),
            1 => {
                let (s, t) = candidates.remove(0);
                self.connect(&s, &t, DEFAULT_CAPACITY)
            }
            count => Err(GraphError::Ambiguous {
                a: a.to_string(),
                b: b.to_string(),
                count,
            }),
        }
    }

    /// Describes the parameter addressed by `target`: a leaf parameter, or an
    /// exposed parameter of a subgraph (reported under its exposed name).
    pub fn resolve_parameter(&self, target: &ParamTarget) -> Result<Parameter, GraphError> {
        let unknown = || GraphError::UnknownTarget(target.to_string());
        if let Some(node) = self.node_at(&target.node) {
            return node.parameter(&target.parameter).cloned().ok_or_else(unknown);
        }
        let sub = self
            .workflow_at(&target.node)
            .filter(|_| !target.node.is_empty())
            .ok_or_else(unknown)?;
        sub.exposed_parameter(&target.parameter).ok_or_else(unknown)
    }

    /// Combined description of an exposed parameter, taken from its first
    /// mapped target. Required if any target is required and unset.
    pub fn exposed_parameter(&self, name: &str) -> Option<Parameter> {
        let targets = self.exposed_parameters.get(name)?;
        let resolved: Vec<Parameter> = targets
            .iter()
            .filter_map(|t| self.resolve_parameter(t).ok())
            .collect();
        let first = resolved.first()?;
        Some(Parameter {
            name: name.to_string(),
            value_type: first.value_type.clone(),
            default: first.default.clone(),
            value: first.value.clone(),
            required: resolved.iter().any(|p| p.required),
            help: first.help.clone(),
        })
    }

    /// Groups parameters under one externally visible name (a pure rename
    /// when given a single target).
    pub fn map_parameters(
        &mut self,
        exposed: &str,
        targets: &[ParamTarget],
    ) -> Result<(), GraphError> {
        if !is_identifier(exposed) {
            return Err(GraphError::InvalidName(exposed.to_string()));
        }
        if self.exposed_parameters.contains_key(exposed) {
            return Err(GraphError::DuplicateName(exposed.to_string()));
        }
        if targets.is_empty() {
            return Err(GraphError::UnknownTarget(exposed.to_string()));
        }
        let resolved = targets
            .iter()
            .map(|t| self.resolve_parameter(t))
            .collect::<Result<Vec<_>, _>>()?;
        let first = &resolved[0].value_type;
        if resolved.iter().any(|p| &p.value_type != first) {
            return Err(GraphError::HeterogeneousTypes(
                resolved.iter().map(|p| p.value_type.to_string()).collect(),
            ));
        }
        self.exposed_parameters
            .insert(exposed.to_string(), targets.to_vec());
        Ok(())
    }

    /// Sets an exposed parameter (propagating to every mapped target) or a
    /// single `"node/path.param"`.
    pub fn set_parameter(
        &mut self,
        name: &str,
        value: impl Into<ParamValue>,
    ) -> Result<(), GraphError> {
        let value = value.into();
        if let Some(targets) = self.exposed_parameters.get(name).cloned() {
            // check every target first so a type error leaves nothing half-set
            for t in &targets {
                let p = self.resolve_parameter(t)?;
                if !p.value_type.accepts(&value) {
                    return Err(GraphError::ParameterType {
                        parameter: name.to_string(),
                        expected: p.value_type.to_string(),
                        value: format!("{value:?}"),
                    });
                }
            }
            for t in &targets {
                self.set_target(t, value.clone())?;
            }
            return Ok(());
        }
        let target = ParamTarget::parse(name).map_err(|_| GraphError::UnknownParameter {
            node: self.name.clone(),
            parameter: name.to_string(),
        })?;
        self.set_target(&target, value)
    }

    fn set_target(&mut self, target: &ParamTarget, value: ParamValue) -> Result<(), GraphError> {
        if let Some(node) = self.node_at_mut(&target.node) {
            return node.set(&target.parameter, value);
        }
        match self.workflow_at_mut(&target.node) {
            Some(sub) if !target.node.is_empty() => {
                if sub.exposed_parameters.contains_key(&target.parameter) {
                    sub.set_parameter(&target.parameter, value)
                } else {
                    Err(GraphError::UnknownTarget(target.to_string()))
                }
            }
            _ => Err(GraphError::UnknownTarget(target.to_string())),
        }
    }

    /// Looks up `"node/path.param"`.
    pub fn parameter(&self, path: &str) -> Option<&Parameter> {
        let (node, param) = split_port_path(path).ok()?;
        self.node_at(node)?.parameter(param)
    }

    /// All leaves with their paths, depth-first (a level's nodes before its
    /// subgraphs).
    pub fn leaves(&self) -> Vec<(String, &NodeSpec)> {
        let mut out = Vec::new();
        self.collect_leaves("", &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a NodeSpec)>) {
        for n in &self.nodes {
            out.push((join(prefix, &n.name), n));
        }
        for s in &self.subgraphs {
            s.collect_leaves(&join(prefix, &s.name), out);
        }
    }

    /// Paths of every subgraph, depth-first.
    pub fn subgraph_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn walk(wf: &Workflow, prefix: &str, out: &mut Vec<String>) {
            for s in &wf.subgraphs {
                let p = join(prefix, &s.name);
                out.push(p.clone());
                walk(s, &p, out);
            }
        }
        walk(self, "", &mut out);
        out
    }

    /// Height of the tree below the root: 0 when empty, 1 with only leaves.
    pub fn depth(&self) -> usize {
        let leaf = usize::from(!self.nodes.is_empty());
        self.subgraphs
            .iter()
            .map(|s| 1 + s.depth())
            .chain(std::iter::once(leaf))
            .max()
            .unwrap_or(0)
    }

    /// Number of channel edges at every level of the tree.
    pub fn channel_count(&self) -> usize {
        self.channels.len() + self.subgraphs.iter().map(Workflow::channel_count).sum::<usize>()
    }

    /// Connected (input, output) port counts over all leaves.
    pub fn connected_port_counts(&self) -> (usize, usize) {
        self.leaves().iter().fold((0, 0), |(i, o), (_, n)| {
            let ci = n.inputs().filter(|p| p.is_connected()).count();
            let co = n.outputs().filter(|p| p.is_connected()).count();
            (i + ci, o + co)
        })
    }

    /// Every leaf and every channel, with endpoints resolved to absolute leaf
    /// paths. Channel ids are assigned in traversal order.
    pub fn flatten(&self) -> Result<FlatGraph<'_>, GraphError> {
        let nodes = self.leaves();
        let mut edges = Vec::new();
        self.collect_edges("", &mut edges)?;
        for (i, e) in edges.iter_mut().enumerate() {
            e.id = format!("channel.{i}");
        }
        Ok(FlatGraph { nodes, edges })
    }

    fn collect_edges(&self, prefix: &str, out: &mut Vec<FlatEdge>) -> Result<(), GraphError> {
        for edge in &self.channels {
            let (sn, sp) = self.resolve_port(&edge.source)?;
            let (tn, tp) = self.resolve_port(&edge.target)?;
            let st = self.port_at(&edge.source)?.port_type.clone();
            let tt = self.port_at(&edge.target)?.port_type.clone();
            out.push(FlatEdge {
                id: String::new(),
                source_node: join(prefix, &sn),
                source_port: sp,
                target_node: join(prefix, &tn),
                target_port: tp,
                capacity: edge.capacity,
                port_type: if st.is_wildcard() { tt } else { st },
            });
        }
        for s in &self.subgraphs {
            s.collect_edges(&join(prefix, &s.name), out)?;
        }
        Ok(())
    }

    // Raw insertion used by document loading: the channel list is rebuilt
    // through `connect`, everything else is assigned directly.
    pub(crate) fn insert_exposed_parameter_unchecked(
        &mut self,
        name: String,
        targets: Vec<ParamTarget>,
    ) {
        self.exposed_parameters.insert(name, targets);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passthrough(name: &str, ty: &str) -> NodeSpec {
        NodeSpec::new(name, "Pass").input("inp", ty).output("out", ty)
    }

    fn docking() -> Workflow {
        let mut wf = Workflow::new("docking");
        wf.add_node(
            NodeSpec::new("embed", "Smiles2Molecules")
                .input("inp", "list<string>")
                .output("out", "list<molecule>"),
        )
        .unwrap();
        wf.add_node(
            NodeSpec::new("dock", "Vina")
                .input("inp", "list<molecule>")
                .output("out", "list<float>")
                .param(Parameter::required("receptor", "path")),
        )
        .unwrap();
        wf.add_node(NodeSpec::new("result", "LogResult").input("inp", "*"))
            .unwrap();
        wf
    }

    #[test]
    fn add_nodes_builds_leaves() {
        let wf = docking();
        assert_eq!(wf.leaves().len(), 3);
        assert_eq!(wf.depth(), 1);
        let mut empty = Workflow::new("e");
        assert_eq!(empty.depth(), 0);
        empty.add_node(passthrough("a", "int")).unwrap();
        assert_eq!(empty.depth(), 1);
    }

    #[test]
    fn duplicate_node_name_rejected() {
        let mut wf = Workflow::new("w");
        wf.add_node(passthrough("a", "int")).unwrap();
        assert_eq!(
            wf.add_node(passthrough("a", "int")),
            Err(GraphError::DuplicateName("a".into()))
        );
        let mut sub = Workflow::new("a");
        sub.add_node(passthrough("x", "int")).unwrap();
        assert!(matches!(wf.add_subgraph(sub), Err(GraphError::DuplicateName(_))));
    }

    #[test]
    fn duplicate_port_names_rejected() {
        let mut wf = Workflow::new("w");
        let spec = NodeSpec::new("a", "K").input("x", "int").output("x", "int");
        assert!(matches!(wf.add_node(spec), Err(GraphError::DuplicateName(_))));
    }

    #[test]
    fn nested_subgraph_paths_resolve() {
        let mut inner = Workflow::new("inner");
        inner.add_node(passthrough("leaf", "int")).unwrap();
        inner.expose_port("inp", "leaf.inp").unwrap();
        let mut mid = Workflow::new("mid");
        mid.add_node(passthrough("m", "int")).unwrap();
        mid.add_subgraph(inner).unwrap();
        mid.expose_port("inp", "inner.inp").unwrap();
        let mut root = Workflow::new("root");
        root.add_node(passthrough("src", "int")).unwrap();
        root.add_subgraph(mid).unwrap();
        assert_eq!(root.depth(), 3);

        let paths: Vec<String> = root.leaves().into_iter().map(|(p, _)| p).collect();
        assert_eq!(paths, vec!["src", "mid/m", "mid/inner/leaf"]);
        assert_eq!(root.subgraph_paths(), vec!["mid", "mid/inner"]);
        assert_eq!(
            root.resolve_port("mid.inp").unwrap(),
            ("mid/inner/leaf".to_string(), "inp".to_string())
        );
        assert_eq!(
            root.resolve_port("mid/inner/leaf.out").unwrap(),
            ("mid/inner/leaf".to_string(), "out".to_string())
        );
        root.connect("src.out", "mid.inp", 4).unwrap();
        assert!(root.port_at("mid/inner/leaf.inp").unwrap().is_connected());
        let flat = root.flatten().unwrap();
        assert_eq!(flat.edges[0].target_node, "mid/inner/leaf");
    }

    #[test]
    fn same_subgraph_twice_is_cycle() {
        let mut sub = Workflow::new("par");
        sub.add_node(passthrough("w", "int")).unwrap();
        let twin = sub.clone();
        let mut root = Workflow::new("root");
        root.add_subgraph(sub).unwrap();
        let mut renamed = twin;
        renamed.name = "par2".into();
        assert_eq!(
            root.add_subgraph(renamed.clone()),
            Err(GraphError::CycleInTree("par2".into()))
        );
        // a fresh copy has its own identity
        root.add_subgraph(renamed.fresh_copy()).unwrap();
    }

    #[test]
    fn connect_checks_types_and_direction() {
        let mut wf = Workflow::new("w");
        wf.add_node(NodeSpec::new("a", "K").output("out", "int")).unwrap();
        wf.add_node(NodeSpec::new("b", "K").input("inp", "string")).unwrap();
        wf.add_node(NodeSpec::new("c", "K").input("inp", "*")).unwrap();
        assert!(matches!(
            wf.connect("a.out", "b.inp", 16),
            Err(GraphError::TypeMismatch { .. })
        ));
        assert!(matches!(
            wf.connect("b.inp", "a.out", 16),
            Err(GraphError::DirectionError { .. })
        ));
        assert!(matches!(wf.connect("a.out", "c.inp", 0), Err(GraphError::InvalidCapacity)));
        wf.connect("a.out", "c.inp", 16).unwrap();
        assert!(matches!(
            wf.connect("a.out", "c.inp", 16),
            Err(GraphError::AlreadyConnected(_))
        ));
    }

    #[test]
    fn connect_all_is_atomic() {
        let mut wf = docking();
        let ids = wf
            .connect_all(&[("embed.out", "dock.inp"), ("dock.out", "result.inp")])
            .unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(wf.channel_count(), 2);

        let mut wf = docking();
        let empty: [(&str, &str); 0] = [];
        assert!(wf.connect_all(&empty).unwrap().is_empty());
        let err = wf
            .connect_all(&[("embed.out", "dock.inp"), ("dock.out", "embed.inp")])
            .unwrap_err();
        assert!(matches!(err, GraphError::InPair { index: 1, .. }));
        assert_eq!(wf.channel_count(), 0);
        assert!(!wf.port_at("embed.out").unwrap().is_connected());
    }

    #[test]
    fn auto_connect_unique_ambiguous_none() {
        let mut wf = Workflow::new("w");
        wf.add_node(NodeSpec::new("a", "K").output("out", "float")).unwrap();
        wf.add_node(NodeSpec::new("b", "K").input("x", "float")).unwrap();
        wf.add_node(NodeSpec::new("c", "K").input("x", "float").input("y", "float"))
            .unwrap();
        wf.add_node(NodeSpec::new("d", "K").input("x", "int")).unwrap();
        assert!(matches!(
            wf.auto_connect("a", "c"),
            Err(GraphError::Ambiguous { count: 2, .. })
        ));
        assert!(matches!(wf.auto_connect("a", "d"), Err(GraphError::NoMatch(..))));
        wf.auto_connect("a", "b").unwrap();
        assert!(wf.port_at("b.x").unwrap().is_connected());
    }

    #[test]
    fn parameter_mapping_fans_out() {
        let mut wf = Workflow::new("w");
        for n in ["a", "b"] {
            wf.add_node(
                NodeSpec::new(n, "K").param(Parameter::with_default("n_cpus", "int", 1.into())),
            )
            .unwrap();
        }
        wf.add_node(NodeSpec::new("s", "K").param(Parameter::optional("label", "string")))
            .unwrap();
        wf.map_parameters(
            "n_cpus",
            &[ParamTarget::new("a", "n_cpus"), ParamTarget::new("b", "n_cpus")],
        )
        .unwrap();
        wf.set_parameter("n_cpus", 4i64).unwrap();
        assert_eq!(wf.parameter("a.n_cpus").unwrap().value, Some(ParamValue::Int(4)));
        assert_eq!(wf.parameter("b.n_cpus").unwrap().value, Some(ParamValue::Int(4)));

        wf.map_parameters("name", &[ParamTarget::new("s", "label")]).unwrap();
        wf.set_parameter("name", "x").unwrap();
        assert_eq!(wf.parameter("s.label").unwrap().value, Some("x".into()));

        assert!(matches!(
            wf.map_parameters(
                "mixed",
                &[ParamTarget::new("a", "n_cpus"), ParamTarget::new("s", "label")]
            ),
            Err(GraphError::HeterogeneousTypes(_))
        ));
        assert!(matches!(
            wf.map_parameters("nope", &[ParamTarget::new("zz", "n_cpus")]),
            Err(GraphError::UnknownTarget(_))
        ));
        assert!(wf.set_parameter("n_cpus", "four").is_err());
        assert_eq!(wf.parameter("a.n_cpus").unwrap().value, Some(ParamValue::Int(4)));
    }

    #[test]
    fn subgraph_exposed_parameters_address_from_parent() {
        let mut sub = Workflow::new("sub");
        sub.add_node(NodeSpec::new("n", "K").param(Parameter::required("k", "int")))
            .unwrap();
        sub.map_parameters("k", &[ParamTarget::new("n", "k")]).unwrap();
        let mut root = Workflow::new("root");
        root.add_subgraph(sub).unwrap();
        root.map_parameters("outer_k", &[ParamTarget::new("sub", "k")])
            .unwrap();
        root.set_parameter("outer_k", 7i64).unwrap();
        assert_eq!(root.parameter("sub/n.k").unwrap().value, Some(ParamValue::Int(7)));
        assert!(root.exposed_parameter("outer_k").unwrap().required);
    }

    #[test]
    fn bijectivity_after_connections() {
        let mut wf = Workflow::new("w");
        for i in 0..4 {
            wf.add_node(passthrough(&format!("n{i}"), "int")).unwrap();
        }
        wf.connect("n0.out", "n1.inp", 1).unwrap();
        wf.connect("n1.out", "n2.inp", 1).unwrap();
        wf.connect("n3.out", "n0.inp", 1).unwrap();
        let _ = wf.connect("n3.out", "n3.inp", 1);
        let (i, o) = wf.connected_port_counts();
        assert_eq!(i, wf.channel_count());
        assert_eq!(o, wf.channel_count());
    }
}
