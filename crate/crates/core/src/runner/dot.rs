use std::fmt::Write as _;

use crate::envgraph::NavGraph;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering of a walked trajectory. With a graph, every viewpoint
/// is drawn at its planar position and unwalked edges are dashed.
pub fn trajectory_dot(episode_id: &str, trajectory: &[String], graph: Option<&NavGraph>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(episode_id));
    let _ = writeln!(out, "  node [shape=circle, fontsize=10];");
    let walked: std::collections::HashSet<(&str, &str)> = trajectory
        .windows(2)
        .flat_map(|w| [(w[0].as_str(), w[1].as_str()), (w[1].as_str(), w[0].as_str())])
        .collect();

    let mut declared = std::collections::BTreeSet::new();
    if let Some(g) = graph {
        for vp in g.viewpoints() {
            let _ = writeln!(
                out,
                "  {} [pos=\"{:.2},{:.2}!\"{}];",
                quote(&vp.id),
                vp.position.x,
                vp.position.y,
                if trajectory.contains(&vp.id) { ", style=filled" } else { "" }
            );
            declared.insert(vp.id.as_str());
        }
        for (a, b, _) in g.edges() {
            if !walked.contains(&(a, b)) {
                let _ = writeln!(out, "  {} -> {} [dir=none, style=dashed, color=gray];", quote(a), quote(b));
            }
        }
    }
    for id in trajectory {
        if !declared.contains(id.as_str()) {
            let _ = writeln!(out, "  {} [style=filled];", quote(id));
            declared.insert(id);
        }
    }
    if let (Some(first), Some(last)) = (trajectory.first(), trajectory.last()) {
        let _ = writeln!(out, "  {} [shape=doublecircle];", quote(first));
        if last != first {
            let _ = writeln!(out, "  {} [shape=box];", quote(last));
        }
    }
    for (i, w) in trajectory.windows(2).enumerate() {
        let _ = writeln!(out, "  {} -> {} [label=\"{}\", penwidth=2];", quote(&w[0]), quote(&w[1]), i + 1);
    }
    out.push_str("}\n");
    out
}
