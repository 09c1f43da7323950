use std::fmt;
use std::str::FromStr;

use serde_json::Value;

use super::{assigned_type, param};
use crate::graph::{NodeSpec, Parameter};
use crate::registry::NodeRegistry;
use crate::runtime::{NodeBody, NodeContext, NodeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl FromStr for Comparison {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "gt" | ">" => Comparison::Gt,
            "ge" | ">=" => Comparison::Ge,
            "lt" | "<" => Comparison::Lt,
            "le" | "<=" => Comparison::Le,
            "eq" | "==" => Comparison::Eq,
            "ne" | "!=" => Comparison::Ne,
            other => return Err(format!("unknown comparison {other:?}")),
        })
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Eq => "==",
            Comparison::Ne => "!=",
        })
    }
}

impl Comparison {
    /// Parameter spelling, the inverse of `from_str`.
    pub fn name(self) -> &'static str {
        match self {
            Comparison::Gt => "gt",
            Comparison::Ge => "ge",
            Comparison::Lt => "lt",
            Comparison::Le => "le",
            Comparison::Eq => "eq",
            Comparison::Ne => "ne",
        }
    }
}

/// Threshold comparison on a number, optionally extracted from a record
/// by a dotted field path. Predicates are data, never code, so documents
/// stay safe to load.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub comparison: Comparison,
    pub threshold: f64,
    pub field: Option<String>,
}

impl Predicate {
    pub fn new(comparison: Comparison, threshold: f64) -> Self {
        Predicate {
            comparison,
            threshold,
            field: None,
        }
    }

    pub fn on_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    /// Reads `predicate`, `threshold` and `field` parameters.
    pub fn from_spec(spec: &NodeSpec) -> Result<Self, NodeError> {
        let comparison = param::string(spec, "predicate")?
            .parse()
            .map_err(|message| NodeError::Parameter {
                name: "predicate".into(),
                message,
            })?;
        Ok(Predicate {
            comparison,
            threshold: param::float(spec, "threshold")?,
            field: param::opt_string(spec, "field").filter(|f| !f.is_empty()),
        })
    }

    pub fn parameters() -> [Parameter; 3] {
        [
            Parameter::with_default("predicate", "string", "ge".into())
                .help("comparison: gt, ge, lt, le, eq or ne"),
            Parameter::required("threshold", "float"),
            Parameter::optional("field", "string").help("dotted path of the compared field"),
        ]
    }

    pub fn compare(&self, x: f64) -> bool {
        let t = self.threshold;
        match self.comparison {
            Comparison::Gt => x > t,
            Comparison::Ge => x >= t,
            Comparison::Lt => x < t,
            Comparison::Le => x <= t,
            Comparison::Eq => x == t,
            Comparison::Ne => x != t,
        }
    }

    pub fn evaluate(&self, value: &Value) -> Result<bool, String> {
        let mut target = value;
        if let Some(path) = &self.field {
            for key in path.split('.') {
                target = target
                    .get(key)
                    .ok_or_else(|| format!("field {path:?} not present in {value}"))?;
            }
        }
        match target {
            Value::Number(n) => Ok(self.compare(n.as_f64().unwrap_or(f64::NAN))),
            Value::Bool(b) => Ok(self.compare(if *b { 1.0 } else { 0.0 })),
            other => Err(format!("cannot compare non-numeric value {other}")),
        }
    }
}

pub(super) fn register(r: &mut NodeRegistry) {
    r.register(
        "ConditionalRouter",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            let mut spec = NodeSpec::new(name, "ConditionalRouter")
                .input("inp", &ty)
                .output("out_true", &ty)
                .output("out_false", &ty)
                .looped(true)
                .param(super::item_type_param());
            for p in Predicate::parameters() {
                spec = spec.param(p);
            }
            Ok(spec)
        },
        |spec| {
            let predicate = Predicate::from_spec(spec)?;
            Ok(Box::new(move |ctx: &mut NodeContext| {
                let value: Value = ctx.receive("inp")?;
                let hit = predicate
                    .evaluate(&value)
                    .map_err(|e| NodeError::retryable(format!("predicate error: {e}")))?;
                let port = if hit { "out_true" } else { "out_false" };
                ctx.send(port, &value)
            }) as Box<dyn NodeBody>)
        },
    );
}
