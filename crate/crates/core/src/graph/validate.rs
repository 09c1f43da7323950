use std::fmt;

use serde::Serialize;

use super::{Direction, Workflow};
use crate::registry::NodeRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn from_issues(issues: Vec<Issue>) -> Self {
        let ok = !issues.iter().any(|i| i.severity == Severity::Error);
        ValidationReport { ok, issues }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            let sev = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{sev}: {}: {}", issue.path, issue.message)?;
        }
        write!(f, "{}", if self.ok { "ok" } else { "invalid" })
    }
}

impl Workflow {
    /// Structural check ahead of execution. Pure: never mutates the
    /// workflow. Cycles are allowed.
    pub fn validate(&self, registry: &NodeRegistry) -> ValidationReport {
        let mut issues = Vec::new();
        let mut push = |severity, path: String, message: String| {
            issues.push(Issue {
                severity,
                path,
                message,
            })
        };

        for (path, node) in self.leaves() {
            if !registry.contains(&node.kind) {
                push(
                    Severity::Error,
                    path.clone(),
                    format!("unknown node kind {:?}", node.kind),
                );
            }
            for port in &node.ports {
                let port_path = format!("{path}.{}", port.name);
                match (port.direction, port.is_connected()) {
                    (Direction::Input, false) if !port.optional => push(
                        Severity::Error,
                        port_path,
                        "unconnected input".to_string(),
                    ),
                    (Direction::Output, false) => push(
                        Severity::Warning,
                        port_path,
                        "unconnected output".to_string(),
                    ),
                    _ => {}
                }
            }
            for param in &node.parameters {
                let param_path = format!("{path}.{}", param.name);
                if param.is_unset_required() {
                    push(
                        Severity::Error,
                        param_path,
                        "required parameter unset".to_string(),
                    );
                } else if let Some(v) = param.effective() {
                    if !param.value_type.accepts(v) {
                        push(
                            Severity::Error,
                            param_path,
                            format!("value {v:?} does not match type {}", param.value_type),
                        );
                    }
                }
            }
        }

        let mut levels = vec![String::new()];
        levels.extend(self.subgraph_paths());
        for level in levels {
            let Some(wf) = self.workflow_at(&level) else {
                continue;
            };
            let at = |p: &str| {
                if level.is_empty() {
                    p.to_string()
                } else {
                    format!("{level}/{p}")
                }
            };
            for edge in wf.channels() {
                let ends = (wf.port_at(&edge.source), wf.port_at(&edge.target));
                match ends {
                    (Ok(src), Ok(dst)) => {
                        if src.direction != Direction::Output || dst.direction != Direction::Input
                        {
                            push(
                                Severity::Error,
                                at(&edge.source),
                                format!("channel to {} has wrong port directions", edge.target),
                            );
                        }
                        if !src.port_type.compatible(&dst.port_type) {
                            push(
                                Severity::Error,
                                at(&edge.source),
                                format!(
                                    "type mismatch: {} -> {} ({})",
                                    src.port_type, dst.port_type, edge.target
                                ),
                            );
                        }
                    }
                    (Err(_), _) => push(
                        Severity::Error,
                        at(&edge.source),
                        "dangling channel endpoint".to_string(),
                    ),
                    (_, Err(_)) => push(
                        Severity::Error,
                        at(&edge.target),
                        "dangling channel endpoint".to_string(),
                    ),
                }
            }
            for (name, targets) in wf.exposed_parameters() {
                for t in targets {
                    if wf.resolve_parameter(t).is_err() {
                        push(
                            Severity::Error,
                            at(name),
                            format!("exposed parameter maps to unknown {t}"),
                        );
                    }
                }
            }
        }
        ValidationReport::from_issues(issues)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeSpec, Parameter};
    use crate::nodes::noop_body;

    fn registry() -> NodeRegistry {
        let mut r = NodeRegistry::new();
        for kind in ["Src", "Dock", "Sink", "Pass"] {
            r.register_template(NodeSpec::new("t", kind), |_| Ok(noop_body()));
        }
        r
    }

    fn docking(receptor: bool) -> Workflow {
        let mut wf = Workflow::new("docking");
        wf.add_node(NodeSpec::new("embed", "Src").output("out", "list<molecule>"))
            .unwrap();
        let mut dock = NodeSpec::new("dock", "Dock")
            .input("inp", "list<molecule>")
            .output("out", "list<float>")
            .param(Parameter::required("receptor", "path"));
        if receptor {
            dock.set("receptor", "./receptor.pdbqt").unwrap();
        }
        wf.add_node(dock).unwrap();
        wf.add_node(NodeSpec::new("result", "Sink").input("inp", "*"))
            .unwrap();
        wf.connect_all(&[("embed.out", "dock.inp"), ("dock.out", "result.inp")])
            .unwrap();
        wf
    }

    #[test]
    fn docking_with_receptor_is_ok() {
        let report = docking(true).validate(&registry());
        assert!(report.ok, "{report}");
        assert!(report.issues.is_empty());
    }

    #[test]
    fn missing_receptor_reported() {
        let report = docking(false).validate(&registry());
        assert!(!report.ok);
        let errs: Vec<_> = report.errors().collect();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].path, "dock.receptor");
        assert_eq!(errs[0].message, "required parameter unset");
    }

    #[test]
    fn cycles_are_fine_and_unconnected_outputs_warn() {
        let mut wf = Workflow::new("cycle");
        for n in ["a", "b"] {
            wf.add_node(NodeSpec::new(n, "Pass").input("inp", "int").output("out", "int"))
                .unwrap();
        }
        wf.connect("a.out", "b.inp", 16).unwrap();
        wf.connect("b.out", "a.inp", 16).unwrap();
        let report = wf.validate(&registry());
        assert!(report.ok);

        wf.add_node(NodeSpec::new("c", "Src").output("out", "int")).unwrap();
        let report = wf.validate(&registry());
        assert!(report.ok);
        assert_eq!(report.warnings().count(), 1);
    }

    #[test]
    fn unknown_kind_and_unconnected_input() {
        let mut wf = Workflow::new("w");
        wf.add_node(NodeSpec::new("x", "Nope").input("inp", "int")).unwrap();
        let report = wf.validate(&registry());
        let msgs: Vec<_> = report.errors().map(|i| i.message.as_str()).collect();
        assert!(msgs.contains(&"unknown node kind \"Nope\""));
        assert!(msgs.contains(&"unconnected input"));
    }

    #[test]
    fn validate_is_pure() {
        let wf = docking(false);
        let before = wf.clone();
        let r1 = wf.validate(&registry());
        let r2 = wf.validate(&registry());
        assert_eq!(r1, r2);
        assert_eq!(wf, before);
    }
}
