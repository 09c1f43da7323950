use std::fmt::Write;

use crate::graph::Workflow;

/// Graphviz description: one vertex per leaf, one cluster per subgraph and
/// one edge per channel labelled with its type. Output order follows the
/// workflow tree, so it is deterministic.
pub fn export_dot(workflow: &Workflow) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(&workflow.name));
    out.push_str("  rankdir=LR;\n  node [shape=box];\n");
    write_level(workflow, "", 1, &mut out);
    if let Ok(flat) = workflow.flatten() {
        for e in &flat.edges {
            let _ = writeln!(
                out,
                "  {} -> {} [label={}];",
                quote(&e.source_node),
                quote(&e.target_node),
                quote(e.port_type.as_str())
            );
        }
    }
    out.push_str("}\n");
    out
}

fn write_level(wf: &Workflow, prefix: &str, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for n in wf.nodes() {
        let path = join(prefix, &n.name);
        let _ = writeln!(
            out,
            "{pad}{} [label={}];",
            quote(&path),
            quote(&format!("{}\\n{}", n.name, n.kind))
        );
    }
    for s in wf.subgraphs() {
        let path = join(prefix, &s.name);
        let _ = writeln!(out, "{pad}subgraph {} {{", quote(&format!("cluster_{path}")));
        let _ = writeln!(out, "{pad}  label={};", quote(&s.name));
        write_level(s, &path, depth + 1, out);
        let _ = writeln!(out, "{pad}}}");
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\\\""))
}
