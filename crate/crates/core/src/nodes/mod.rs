//! Built-in node library: data movement, routing, iteration plumbing and
//! external command execution (locally or through a queue backend).

mod command;
mod data;
mod iteration;
pub mod param;
mod predicate;
mod queue;

use std::collections::BTreeMap;

pub use command::{run_command, Capture, CommandError, CommandResult, CommandSpec};
pub use iteration::{Envelope, ENVELOPE_TYPE};
pub use predicate::{Comparison, Predicate};
pub use queue::{
    JobInfo, JobRequest, JobState, MockQueue, QueueBackend, QueueError, Resources, Transition,
};

use crate::graph::{ParamValue, Parameter};
use crate::registry::NodeRegistry;
use crate::runtime::{NodeBody, NodeContext};

/// A body that returns immediately. Handy for structural tests.
pub fn noop_body() -> Box<dyn NodeBody> {
    Box::new(|_: &mut NodeContext| Ok(()))
}

/// Registers every built-in node kind.
pub fn register_std(registry: &mut NodeRegistry) {
    data::register(registry);
    predicate::register(registry);
    iteration::register(registry);
    command::register(registry);
    queue::register(registry);
}

// Declaration helpers: several kinds derive their port list or port types
// from parameter values assigned before declaration.

pub(crate) fn assigned_count(
    assigned: &BTreeMap<String, ParamValue>,
    name: &str,
    default: i64,
    min: i64,
) -> Result<usize, String> {
    let n = match assigned.get(name) {
        None => default,
        Some(v) => v
            .as_i64()
            .ok_or_else(|| format!("parameter {name} must be an integer"))?,
    };
    if n < min {
        return Err(format!("parameter {name} must be at least {min}, got {n}"));
    }
    Ok(n as usize)
}

pub(crate) fn assigned_type(assigned: &BTreeMap<String, ParamValue>) -> Result<String, String> {
    match assigned.get("item_type") {
        None => Ok("*".to_string()),
        Some(ParamValue::Str(s)) => Ok(s.clone()),
        Some(_) => Err("parameter item_type must be a string".to_string()),
    }
}

/// `T` -> `list<T>`, keeping the wildcard as is.
pub(crate) fn list_type(item: &str) -> String {
    if item == "*" {
        "*".to_string()
    } else {
        format!("list<{item}>")
    }
}

pub(crate) fn item_type_param() -> Parameter {
    Parameter::with_default("item_type", "string", "*".into()).help("type tag of the items")
}
