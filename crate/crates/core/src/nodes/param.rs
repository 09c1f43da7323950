//! Typed parameter accessors for node factories and bodies.

use crate::graph::{NodeSpec, ParamValue};
use crate::runtime::NodeError;

fn missing(name: &str, expected: &str) -> NodeError {
    NodeError::Parameter {
        name: name.to_string(),
        message: format!("expected a value of type {expected}"),
    }
}

pub fn value<'a>(spec: &'a NodeSpec, name: &str) -> Option<&'a ParamValue> {
    spec.parameter(name)?.effective()
}

pub fn float(spec: &NodeSpec, name: &str) -> Result<f64, NodeError> {
    value(spec, name).and_then(ParamValue::as_f64).ok_or_else(|| missing(name, "float"))
}

pub fn int(spec: &NodeSpec, name: &str) -> Result<i64, NodeError> {
    value(spec, name).and_then(ParamValue::as_i64).ok_or_else(|| missing(name, "int"))
}

pub fn boolean(spec: &NodeSpec, name: &str) -> Result<bool, NodeError> {
    value(spec, name).and_then(ParamValue::as_bool).ok_or_else(|| missing(name, "bool"))
}

pub fn string(spec: &NodeSpec, name: &str) -> Result<String, NodeError> {
    value(spec, name)
        .and_then(ParamValue::as_str)
        .map(str::to_string)
        .ok_or_else(|| missing(name, "string"))
}

pub fn opt_string(spec: &NodeSpec, name: &str) -> Option<String> {
    value(spec, name).and_then(ParamValue::as_str).map(str::to_string)
}

pub fn strings(spec: &NodeSpec, name: &str) -> Result<Vec<String>, NodeError> {
    value(spec, name)
        .and_then(ParamValue::as_list)
        .and_then(|items| {
            items
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
        })
        .ok_or_else(|| missing(name, "list<string>"))
}

pub fn ints(spec: &NodeSpec, name: &str) -> Result<Vec<i64>, NodeError> {
    value(spec, name)
        .and_then(ParamValue::as_list)
        .and_then(|items| items.iter().map(ParamValue::as_i64).collect::<Option<Vec<_>>>())
        .ok_or_else(|| missing(name, "list<int>"))
}

pub fn floats(spec: &NodeSpec, name: &str) -> Result<Vec<f64>, NodeError> {
    value(spec, name)
        .and_then(ParamValue::as_list)
        .and_then(|items| items.iter().map(ParamValue::as_f64).collect::<Option<Vec<_>>>())
        .ok_or_else(|| missing(name, "list<float>"))
}
