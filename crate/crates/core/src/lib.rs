//! Flow-based workflow engine for directed cyclic graphs.
//!
//! Workflows are trees of nodes and subgraphs joined by bounded, typed
//! channels. Cycles are allowed, so iteration and feedback loops are plain
//! graph edges. Each node runs in its own thread; execution ends when
//! channel closures have cascaded through the graph, when a node fails, or
//! when the supervisor detects a deadlock.

pub mod channel;
pub mod graph;
pub mod io;
pub mod nodes;
pub mod patterns;
pub mod registry;
pub mod runtime;
pub mod signal;

pub use graph::{
    NodeHandle, NodeSpec, ParamTarget, ParamValue, Parameter, PortType, ValidationReport,
    Workflow, DEFAULT_CAPACITY,
};
pub use registry::NodeRegistry;
pub use runtime::{
    execute, ExecutionReport, NodeBody, NodeContext, NodeError, NodeStatus, Outcome, RunConfig,
    RunError,
};
pub use signal::{StopReason, StopSignal};
