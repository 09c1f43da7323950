//! Subgraph factories for the common flow shapes: batching, parallel
//! branches and iteration. Each returns a [`Workflow`] with boundary ports
//! `inp` and `out`, ready to be added to a larger graph.

use crate::graph::{Direction, GraphError, NodeSpec, ParamValue, Port, PortType, Workflow};
use crate::nodes::Predicate;
use crate::registry::{NodeRegistry, RegistryError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapeError {
    #[error("inner step must have exactly one {direction} port, found {found}")]
    Arity { direction: Direction, found: usize },
    #[error("inner {port} port has type {found}, expected {expected}")]
    PortType {
        port: String,
        found: String,
        expected: String,
    },
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// The step a pattern wraps: a single node or a whole subgraph with exposed
/// ports.
#[derive(Debug, Clone)]
pub enum Inner {
    Node(NodeSpec),
    Graph(Workflow),
}

impl From<NodeSpec> for Inner {
    fn from(spec: NodeSpec) -> Self {
        Inner::Node(spec)
    }
}

impl From<Workflow> for Inner {
    fn from(wf: Workflow) -> Self {
        Inner::Graph(wf)
    }
}

impl Inner {
    fn named(&self, name: &str) -> Inner {
        match self {
            Inner::Node(spec) => Inner::Node(spec.clone().named(name)),
            Inner::Graph(wf) => {
                let mut copy = wf.fresh_copy();
                copy.name = name.to_string();
                Inner::Graph(copy)
            }
        }
    }

    fn add_to(self, wf: &mut Workflow) -> Result<(), GraphError> {
        match self {
            Inner::Node(spec) => wf.add_node(spec).map(drop),
            Inner::Graph(sub) => wf.add_subgraph(sub).map(drop),
        }
    }
}

/// The single required input and the single output of a step.
struct Shape {
    input: (String, PortType),
    output: (String, PortType),
}

fn shape_of(wf: &Workflow, path: &str) -> Result<Shape, ShapeError> {
    let ports = wf.interface(path)?;
    let pick = |direction: Direction| -> Result<(String, PortType), ShapeError> {
        let found: Vec<&(String, Port)> = ports
            .iter()
            .filter(|(_, p)| p.direction == direction && !p.is_connected())
            .filter(|(_, p)| direction == Direction::Output || !p.optional)
            .collect();
        match found.as_slice() {
            [(name, port)] => Ok((name.clone(), port.port_type.clone())),
            _ => Err(ShapeError::Arity {
                direction,
                found: found.len(),
            }),
        }
    };
    Ok(Shape {
        input: pick(Direction::Input)?,
        output: pick(Direction::Output)?,
    })
}

fn item_type(ty: &PortType) -> ParamValue {
    ParamValue::Str(ty.as_str().to_string())
}

/// `Chunk(n) -> inner -> Combine`. The inner step takes `list<T>` and
/// returns `list<U>`; chunks keep input order and the last may be short.
pub fn make_batched(
    registry: &NodeRegistry,
    name: &str,
    inner: impl Into<Inner>,
    batch_size: usize,
) -> Result<Workflow, ShapeError> {
    if batch_size < 1 {
        return Err(ShapeError::Argument("batch size must be at least 1".into()));
    }
    let mut wf = Workflow::new(name);
    inner.into().named("inner").add_to(&mut wf)?;
    let shape = shape_of(&wf, "inner")?;
    let list_elem = |(port, ty): &(String, PortType)| -> Result<PortType, ShapeError> {
        match ty {
            PortType::Any => Ok(PortType::Any),
            _ => ty.list_element().ok_or_else(|| ShapeError::PortType {
                port: port.clone(),
                found: ty.to_string(),
                expected: "list<T>".into(),
            }),
        }
    };
    let t = list_elem(&shape.input)?;
    let u = list_elem(&shape.output)?;
    wf.add_node(registry.spec(
        "Chunk",
        "chunk",
        [
            ("size", ParamValue::Int(batch_size as i64)),
            ("item_type", item_type(&t)),
        ],
    )?)?;
    wf.add_node(registry.spec("Combine", "combine", [("item_type", item_type(&u))])?)?;
    wf.connect_all(&[
        ("chunk.out".to_string(), format!("inner.{}", shape.input.0)),
        (format!("inner.{}", shape.output.0), "combine.inp".to_string()),
        ("chunk.counts".to_string(), "combine.counts".to_string()),
    ])?;
    wf.expose_port("inp", "chunk.inp")?;
    wf.expose_port("out", "combine.out")?;
    Ok(wf)
}

/// `RoundRobinDistribute -> W copies of inner -> Merge`. Output order across
/// workers is first-come.
pub fn make_parallel(
    registry: &NodeRegistry,
    name: &str,
    inner: impl Into<Inner>,
    workers: usize,
) -> Result<Workflow, ShapeError> {
    if workers < 1 {
        return Err(ShapeError::Argument("worker count must be at least 1".into()));
    }
    let template = inner.into();
    let mut wf = Workflow::new(name);
    let mut shape = None;
    for i in 1..=workers {
        let worker = format!("worker{i}");
        template.named(&worker).add_to(&mut wf)?;
        shape = Some(shape_of(&wf, &worker)?);
    }
    let shape = shape.expect("at least one worker");
    wf.add_node(registry.spec(
        "RoundRobinDistribute",
        "distribute",
        [
            ("outputs", ParamValue::Int(workers as i64)),
            ("item_type", item_type(&shape.input.1)),
        ],
    )?)?;
    wf.add_node(registry.spec(
        "Merge",
        "merge",
        [
            ("inputs", ParamValue::Int(workers as i64)),
            ("item_type", item_type(&shape.output.1)),
        ],
    )?)?;
    let mut pairs = Vec::new();
    for i in 1..=workers {
        pairs.push((format!("distribute.out{i}"), format!("worker{i}.{}", shape.input.0)));
        pairs.push((format!("worker{i}.{}", shape.output.0), format!("merge.inp{i}")));
    }
    wf.connect_all(&pairs)?;
    wf.expose_port("inp", "distribute.inp")?;
    wf.expose_port("out", "merge.out")?;
    Ok(wf)
}

/// `IterationMerge -> body -> IterationRouter`, with the router's feedback
/// edge closing the loop. Items leave once `done` holds or after
/// `max_iterations` passes (0 for no cap); the router records the pass
/// count per item as the `iterations` metric and capped items under
/// `cap_reached`. The body must emit exactly one item per input, in order.
pub fn make_iterative(
    registry: &NodeRegistry,
    name: &str,
    body: impl Into<Inner>,
    done: &Predicate,
    max_iterations: u64,
) -> Result<Workflow, ShapeError> {
    let mut wf = Workflow::new(name);
    body.into().named("body").add_to(&mut wf)?;
    let shape = shape_of(&wf, "body")?;
    let (t, u) = (&shape.input.1, &shape.output.1);
    if !t.compatible(u) {
        return Err(ShapeError::PortType {
            port: shape.output.0.clone(),
            found: u.to_string(),
            expected: t.to_string(),
        });
    }
    let ty = if t.is_wildcard() { u } else { t };
    wf.add_node(registry.spec("IterationMerge", "merge", [("item_type", item_type(ty))])?)?;
    let mut router = registry.spec(
        "IterationRouter",
        "router",
        [
            ("item_type", item_type(ty)),
            ("max_iterations", ParamValue::Int(max_iterations as i64)),
            ("predicate", ParamValue::Str(done.comparison.name().into())),
            ("threshold", ParamValue::Float(done.threshold)),
        ],
    )?;
    if let Some(field) = &done.field {
        router.set("field", field.as_str())?;
    }
    wf.add_node(router)?;
    wf.connect_all(&[
        ("merge.out".to_string(), format!("body.{}", shape.input.0)),
        (format!("body.{}", shape.output.0), "router.inp".to_string()),
        ("merge.meta".to_string(), "router.meta".to_string()),
        ("router.feedback".to_string(), "merge.feedback".to_string()),
    ])?;
    wf.expose_port("inp", "merge.inp")?;
    wf.expose_port("out", "router.out")?;
    Ok(wf)
}
