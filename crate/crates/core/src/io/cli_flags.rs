use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::graph::{ParamTarget, ParamValue, PortType, Workflow};

/// One command-line flag, without the leading `--`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    pub name: String,
    pub value_type: PortType,
    pub default: Option<ParamValue>,
    pub required: bool,
    pub help: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlagSchema {
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("flag --{0} is generated more than once")]
pub struct FlagCollision(pub String);

impl FlagSchema {
    pub fn get(&self, name: &str) -> Option<&Flag> {
        self.flags.iter().find(|f| f.name == name)
    }

    /// Rejects flags that clash with names the caller uses itself.
    pub fn check_reserved(&self, reserved: &[&str]) -> Result<(), FlagCollision> {
        match self.flags.iter().find(|f| reserved.contains(&f.name.as_str())) {
            Some(f) => Err(FlagCollision(f.name.clone())),
            None => Ok(()),
        }
    }

    /// Parses flag text by its declared type.
    pub fn parse_value(&self, name: &str, text: &str) -> Option<Result<ParamValue, String>> {
        self.get(name).map(|f| ParamValue::parse_as(text, &f.value_type))
    }
}

/// Builds the flag list: one flag per exposed parameter of the root, plus
/// `<node-path>.<param>` for every leaf parameter not reachable through an
/// exposure.
pub fn expose_cli(workflow: &Workflow) -> Result<FlagSchema, FlagCollision> {
    let mut flags = Vec::new();
    let mut covered = BTreeSet::new();
    for name in workflow.exposed_parameters().keys() {
        let Some(p) = workflow.exposed_parameter(name) else {
            continue;
        };
        collect_covered(workflow, "", name, &mut covered);
        flags.push(Flag {
            name: name.clone(),
            value_type: p.value_type.clone(),
            default: p.effective().cloned(),
            required: p.is_unset_required(),
            help: p.help.clone(),
        });
    }
    for (path, node) in workflow.leaves() {
        for p in &node.parameters {
            let key = format!("{path}.{}", p.name);
            if covered.contains(&key) {
                continue;
            }
            flags.push(Flag {
                name: key,
                value_type: p.value_type.clone(),
                default: p.effective().cloned(),
                required: p.is_unset_required(),
                help: p.help.clone(),
            });
        }
    }
    let mut seen = BTreeMap::new();
    for f in &flags {
        if seen.insert(f.name.clone(), ()).is_some() {
            return Err(FlagCollision(f.name.clone()));
        }
    }
    Ok(FlagSchema { flags })
}

fn collect_covered(wf: &Workflow, prefix: &str, exposed: &str, out: &mut BTreeSet<String>) {
    let Some(level) = wf.workflow_at(prefix) else {
        return;
    };
    let Some(targets) = level.exposed_parameters().get(exposed) else {
        return;
    };
    for ParamTarget { node, parameter } in targets {
        let path = if prefix.is_empty() {
            node.clone()
        } else {
            format!("{prefix}/{node}")
        };
        if wf.node_at(&path).is_some() {
            out.insert(format!("{path}.{parameter}"));
        } else {
            collect_covered(wf, &path, parameter, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeSpec, Parameter};

    fn dock(name: &str) -> NodeSpec {
        NodeSpec::new(name, "Dock")
            .param(Parameter::required("receptor", "path"))
            .param(Parameter::with_default("n_cpus", "int", ParamValue::Int(1)))
    }

    #[test]
    fn exposed_parameter_becomes_flag() {
        let mut wf = Workflow::new("w");
        wf.add_node(dock("dock")).unwrap();
        wf.map_parameters("receptor", &[ParamTarget::new("dock", "receptor")])
            .unwrap();
        let schema = expose_cli(&wf).unwrap();
        let f = schema.get("receptor").unwrap();
        assert!(f.required);
        assert!(schema.get("dock.receptor").is_none());
        assert_eq!(schema.get("dock.n_cpus").unwrap().default, Some(ParamValue::Int(1)));
    }

    #[test]
    fn unexposed_parameters_are_namespaced() {
        let mut wf = Workflow::new("w");
        wf.add_node(dock("a")).unwrap();
        wf.add_node(dock("b")).unwrap();
        let schema = expose_cli(&wf).unwrap();
        assert!(schema.get("a.n_cpus").is_some());
        assert!(schema.get("b.n_cpus").is_some());
    }

    #[test]
    fn nested_exposure_covers_leaf() {
        let mut sub = Workflow::new("sub");
        sub.add_node(dock("d")).unwrap();
        sub.map_parameters("rec", &[ParamTarget::new("d", "receptor")])
            .unwrap();
        let mut wf = Workflow::new("w");
        wf.add_subgraph(sub).unwrap();
        wf.map_parameters("receptor", &[ParamTarget::new("sub", "rec")])
            .unwrap();
        let schema = expose_cli(&wf).unwrap();
        assert!(schema.get("receptor").is_some());
        assert!(schema.get("sub/d.receptor").is_none());
        assert!(schema.get("sub/d.n_cpus").is_some());
    }

    #[test]
    fn collision_with_namespaced_flag() {
        let mut wf = Workflow::new("w");
        wf.add_node(dock("a")).unwrap();
        wf.add_node(dock("b")).unwrap();
        // document-loaded names are taken verbatim
        wf.insert_exposed_parameter_unchecked(
            "a.n_cpus".into(),
            vec![ParamTarget::new("b", "n_cpus")],
        );
        assert_eq!(expose_cli(&wf).unwrap_err(), FlagCollision("a.n_cpus".into()));
    }

    #[test]
    fn reserved_names() {
        let mut wf = Workflow::new("w");
        wf.add_node(dock("dock")).unwrap();
        wf.map_parameters("timeout", &[ParamTarget::new("dock", "n_cpus")])
            .unwrap();
        let schema = expose_cli(&wf).unwrap();
        assert!(schema.check_reserved(&["config", "timeout"]).is_err());
    }
}
