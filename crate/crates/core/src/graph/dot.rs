use std::fmt::Write;

use super::DiscourseGraph;

/// Graphviz rendering: one node per chunk, one labelled edge per relation.
/// Symmetric relations are drawn without arrowheads.
pub fn export_dot(graph: &DiscourseGraph) -> String {
    let mut out = String::from("digraph discourse {\n  node [shape=box];\n");
    for id in 1..=graph.n_chunks {
        let _ = writeln!(out, "  {id} [label=\"Chunk {id}\"];");
    }
    for e in &graph.edges {
        let style = if e.label.is_symmetric() { ", dir=none" } else { "" };
        let _ = writeln!(out, "  {} -> {} [label=\"{}\"{style}];", e.src, e.dst, e.label);
    }
    out.push_str("}\n");
    out
}
