use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::GraphError;

/// Nominal type of a port or parameter.
///
/// Two types are compatible when their tags are equal or when either side is
/// the wildcard. There is no structural subtyping: `list<int>` and
/// `list<float>` are simply different tags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PortType {
    Any,
    Tag(String),
}

impl PortType {
    pub fn tag(tag: impl Into<String>) -> Self {
        let tag = tag.into();
        if tag == "*" {
            PortType::Any
        } else {
            PortType::Tag(tag)
        }
    }

    pub fn parse(text: &str) -> Self {
        Self::tag(text.trim())
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, PortType::Any)
    }

    pub fn compatible(&self, other: &PortType) -> bool {
        match (self, other) {
            (PortType::Any, _) | (_, PortType::Any) => true,
            (PortType::Tag(a), PortType::Tag(b)) => a == b,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            PortType::Any => "*",
            PortType::Tag(t) => t,
        }
    }

    /// `list<T>` -> `T`.
    pub fn list_element(&self) -> Option<PortType> {
        let tag = self.as_str();
        tag.strip_prefix("list<")
            .and_then(|rest| rest.strip_suffix('>'))
            .map(PortType::parse)
    }

    pub fn list_of(element: &PortType) -> PortType {
        match element {
            PortType::Any => PortType::Any,
            PortType::Tag(t) => PortType::Tag(format!("list<{t}>")),
        }
    }

    /// Whether `value` is acceptable for a parameter of this type.
    pub fn accepts(&self, value: &ParamValue) -> bool {
        match self {
            PortType::Any => true,
            PortType::Tag(tag) => match tag.as_str() {
                "int" => matches!(value, ParamValue::Int(_)),
                "float" => matches!(value, ParamValue::Float(_) | ParamValue::Int(_)),
                "bool" => matches!(value, ParamValue::Bool(_)),
                "string" | "path" => matches!(value, ParamValue::Str(_)),
                _ => match self.list_element() {
                    Some(elem) => match value {
                        ParamValue::List(items) => items.iter().all(|v| elem.accepts(v)),
                        _ => false,
                    },
                    None => true,
                },
            },
        }
    }
}

impl fmt::Display for PortType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for PortType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PortType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(PortType::parse(&s))
    }
}

/// Static parameter value. Restricted to scalars, strings (which also carry
/// file paths) and lists thereof so documents stay portable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<ParamValue>),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Float(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[ParamValue]> {
        match self {
            ParamValue::List(v) => Some(v),
            _ => None,
        }
    }

    /// False for NaN / infinite floats, which have no document representation.
    pub fn is_serializable(&self) -> bool {
        match self {
            ParamValue::Float(v) => v.is_finite(),
            ParamValue::List(items) => items.iter().all(ParamValue::is_serializable),
            _ => true,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ParamValue::Bool(v) => serde_json::Value::Bool(*v),
            ParamValue::Int(v) => serde_json::Value::from(*v),
            ParamValue::Float(v) => serde_json::Number::from_f64(*v)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            ParamValue::Str(v) => serde_json::Value::String(v.clone()),
            ParamValue::List(items) => {
                serde_json::Value::Array(items.iter().map(ParamValue::to_json).collect())
            }
        }
    }

    /// Parses command-line text according to a parameter type tag. Lists are
    /// comma separated.
    pub fn parse_as(text: &str, ty: &PortType) -> Result<ParamValue, String> {
        let bad = || format!("cannot parse {text:?} as {ty}");
        match ty {
            PortType::Any => Ok(serde_json::from_str::<ParamValue>(text)
                .unwrap_or_else(|_| ParamValue::Str(text.to_string()))),
            PortType::Tag(tag) => match tag.as_str() {
                "int" => text.trim().parse().map(ParamValue::Int).map_err(|_| bad()),
                "float" => text.trim().parse().map(ParamValue::Float).map_err(|_| bad()),
                "bool" => text.trim().parse().map(ParamValue::Bool).map_err(|_| bad()),
                "string" | "path" => Ok(ParamValue::Str(text.to_string())),
                _ => match ty.list_element() {
                    Some(elem) => {
                        if text.trim().is_empty() {
                            return Ok(ParamValue::List(Vec::new()));
                        }
                        text.split(',')
                            .map(|part| ParamValue::parse_as(part.trim(), &elem))
                            .collect::<Result<Vec<_>, _>>()
                            .map(ParamValue::List)
                    }
                    None => Ok(serde_json::from_str::<ParamValue>(text)
                        .unwrap_or_else(|_| ParamValue::Str(text.to_string()))),
                },
            },
        }
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Str(v.to_string())
    }
}

impl From<String> for ParamValue {
    fn from(v: String) -> Self {
        ParamValue::Str(v)
    }
}

impl<T: Into<ParamValue>> From<Vec<T>> for ParamValue {
    fn from(v: Vec<T>) -> Self {
        ParamValue::List(v.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

/// Index of a channel edge within the workflow that owns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId(pub usize);

/// Where the channel attached to a port lives: `levels_up` counts workflow
/// levels above the node's parent, so the link stays valid when the
/// enclosing subgraph is nested further.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelLink {
    pub levels_up: usize,
    pub id: ChannelId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub port_type: PortType,
    pub optional: bool,
    pub connected: Option<ChannelLink>,
}

impl Port {
    pub fn input(name: impl Into<String>, port_type: PortType) -> Self {
        Port {
            name: name.into(),
            direction: Direction::Input,
            port_type,
            optional: false,
            connected: None,
        }
    }

    pub fn output(name: impl Into<String>, port_type: PortType) -> Self {
        Port {
            name: name.into(),
            direction: Direction::Output,
            port_type,
            optional: false,
            connected: None,
        }
    }

    pub fn is_connected(&self) -> bool {
        self.connected.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value_type: PortType,
    pub default: Option<ParamValue>,
    pub value: Option<ParamValue>,
    pub required: bool,
    pub help: String,
}

impl Parameter {
    /// A parameter that must be set before execution.
    pub fn required(name: impl Into<String>, value_type: &str) -> Self {
        Parameter {
            name: name.into(),
            value_type: PortType::parse(value_type),
            default: None,
            value: None,
            required: true,
            help: String::new(),
        }
    }

    pub fn with_default(name: impl Into<String>, value_type: &str, default: ParamValue) -> Self {
        Parameter {
            name: name.into(),
            value_type: PortType::parse(value_type),
            default: Some(default),
            value: None,
            required: false,
            help: String::new(),
        }
    }

    pub fn optional(name: impl Into<String>, value_type: &str) -> Self {
        Parameter {
            name: name.into(),
            value_type: PortType::parse(value_type),
            default: None,
            value: None,
            required: false,
            help: String::new(),
        }
    }

    pub fn help(mut self, text: impl Into<String>) -> Self {
        self.help = text.into();
        self
    }

    /// Set value, falling back to the default.
    pub fn effective(&self) -> Option<&ParamValue> {
        self.value.as_ref().or(self.default.as_ref())
    }

    pub fn is_unset_required(&self) -> bool {
        self.required && self.effective().is_none()
    }

    pub fn set(&mut self, value: ParamValue) -> Result<(), GraphError> {
        if !self.value_type.accepts(&value) {
            return Err(GraphError::ParameterType {
                parameter: self.name.clone(),
                expected: self.value_type.to_string(),
                value: format!("{value:?}"),
            });
        }
        // ints are accepted by float parameters; store them as floats
        let value = match (&self.value_type, value) {
            (PortType::Tag(t), ParamValue::Int(v)) if t == "float" => ParamValue::Float(v as f64),
            (_, v) => v,
        };
        self.value = Some(value);
        Ok(())
    }
}

/// Declaration of a leaf computation step.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub kind: String,
    pub ports: Vec<Port>,
    pub parameters: Vec<Parameter>,
    pub looped: bool,
    pub max_retries: u32,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, kind: impl Into<String>) -> Self {
        NodeSpec {
            name: name.into(),
            kind: kind.into(),
            ports: Vec::new(),
            parameters: Vec::new(),
            looped: false,
            max_retries: 0,
        }
    }

    pub fn input(mut self, name: &str, port_type: &str) -> Self {
        self.ports.push(Port::input(name, PortType::parse(port_type)));
        self
    }

    pub fn optional_input(mut self, name: &str, port_type: &str) -> Self {
        let mut port = Port::input(name, PortType::parse(port_type));
        port.optional = true;
        self.ports.push(port);
        self
    }

    pub fn output(mut self, name: &str, port_type: &str) -> Self {
        self.ports.push(Port::output(name, PortType::parse(port_type)));
        self
    }

    pub fn param(mut self, parameter: Parameter) -> Self {
        self.parameters.push(parameter);
        self
    }

    pub fn looped(mut self, looped: bool) -> Self {
        self.looped = looped;
        self
    }

    pub fn retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn port_mut(&mut self, name: &str) -> Option<&mut Port> {
        self.ports.iter_mut().find(|p| p.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.parameters.iter_mut().find(|p| p.name == name)
    }

    pub fn set(&mut self, parameter: &str, value: impl Into<ParamValue>) -> Result<(), GraphError> {
        let node = self.name.clone();
        self.parameter_mut(parameter)
            .ok_or_else(|| GraphError::UnknownParameter {
                node,
                parameter: parameter.to_string(),
            })?
            .set(value.into())
    }

    /// Builder-style [`NodeSpec::set`]; panics on an unknown parameter.
    pub fn with(mut self, parameter: &str, value: impl Into<ParamValue>) -> Self {
        if let Err(e) = self.set(parameter, value) {
            panic!("{e}");
        }
        self
    }

    pub(crate) fn check_unique_names(&self) -> Result<(), GraphError> {
        for (i, p) in self.ports.iter().enumerate() {
            if self.ports[..i].iter().any(|q| q.name == p.name) {
                return Err(GraphError::DuplicateName(format!("{}.{}", self.name, p.name)));
            }
        }
        for (i, p) in self.parameters.iter().enumerate() {
            if self.parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(GraphError::DuplicateName(format!("{}.{}", self.name, p.name)));
            }
        }
        Ok(())
    }
}
