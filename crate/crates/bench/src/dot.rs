//! Graphviz export of routing trees.

use std::collections::BTreeMap;
use std::fmt::Write;

use mcroute_core::{compute_flows, validate, MulticastTree, NodeId, ProblemInstance};

use crate::error::{BenchError, Result};

/// Destination shapes from the highest demand level down; lower levels
/// reuse the last shape.
const SHAPES: [&str; 4] = ["doublecircle", "box", "diamond", "circle"];

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// One `graph` document for `tree`. Hub edges are drawn only when the tree
/// uses them.
pub fn export_dot(instance: &ProblemInstance, label: &str, tree: &MulticastTree) -> Result<String> {
    if tree.root() != instance.source {
        return Err(BenchError::Input(format!(
            "tree {label} is rooted at {} but the source is {}",
            tree.root(),
            instance.source
        )));
    }
    let report = validate(&instance.graph, tree, instance.source, &instance.demands);
    if !report.is_valid() {
        return Err(BenchError::Input(format!("tree {label} does not fit the instance: {}", report.violations.join("; "))));
    }
    let flows = compute_flows(tree, &instance.demands)?;
    let mut levels: Vec<f64> = instance.demands.entries().iter().map(|&(_, d)| d).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let shape = |d: f64| {
        let rank = levels.iter().position(|&l| l == d).unwrap_or(0);
        SHAPES[rank.min(SHAPES.len() - 1)]
    };

    let g = &instance.graph;
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "graph {} {{", quote(label));
    let _ = writeln!(w, "  node [shape=point, width=0.12];");
    for v in 0..g.node_count() {
        let hub = g.is_hub(v);
        if hub && !tree.contains(v) {
            continue;
        }
        let mut attrs = vec![format!("label={}", quote(&v.to_string()))];
        if v == instance.source {
            attrs.push("shape=star, style=filled, fillcolor=gold".into());
        } else if let Some(d) = instance.demands.demand_of(v) {
            attrs.push(format!("shape={}, xlabel={}", shape(d), quote(&fmt_num(d))));
        } else if hub {
            attrs.push("shape=hexagon, style=dashed".into());
        }
        let _ = writeln!(w, "  {v} [{}];", attrs.join(", "));
    }

    let in_tree: BTreeMap<(NodeId, NodeId), f64> = tree
        .edges()
        .into_iter()
        .map(|(c, p)| ((c.min(p), c.max(p)), flows.get(p, c).unwrap_or(0.0)))
        .collect();
    for e in g.edges() {
        let key = (e.u.min(e.v), e.u.max(e.v));
        match in_tree.get(&key) {
            Some(&f) => {
                let _ = writeln!(w, "  {} -- {} [style=bold, penwidth=2.5, label={}];", key.0, key.1, quote(&fmt_num(f)));
            }
            None if g.is_hub(e.u) || g.is_hub(e.v) => {}
            None => {
                let _ = writeln!(w, "  {} -- {} [color=gray70];", key.0, key.1);
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}

/// Documents for several labelled solutions of the same instance.
pub fn export_all(instance: &ProblemInstance, solutions: &[(String, MulticastTree)]) -> Result<Vec<(String, String)>> {
    solutions
        .iter()
        .map(|(label, tree)| Ok((label.clone(), export_dot(instance, label, tree)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcroute_core::{DemandVector, NetworkGraph};

    fn example() -> (ProblemInstance, MulticastTree) {
        let g = NetworkGraph::from_edges(6, [(0, 1, 2.0), (1, 3, 2.0), (1, 4, 1.0), (0, 2, 2.0), (2, 5, 1.0), (3, 4, 3.0)]).unwrap();
        let d = DemandVector::new(vec![(3, 4.0), (4, 2.0), (5, 1.0)]).unwrap();
        let inst = ProblemInstance::new(g, 0, d, 0).unwrap();
        let tree = MulticastTree::from_edges(0, [(1, 0), (3, 1), (4, 1), (2, 0), (5, 2)]).unwrap();
        (inst, tree)
    }

    #[test]
    fn bold_edges_carry_flows() {
        let (inst, tree) = example();
        let doc = export_dot(&inst, "example", &tree).unwrap();
        let mut labels: Vec<String> = doc
            .lines()
            .filter(|l| l.contains("style=bold"))
            .map(|l| l.split("label=\"").nth(1).unwrap().trim_end_matches("\"];").to_string())
            .collect();
        labels.sort_by(|a, b| b.cmp(a));
        assert_eq!(labels, ["4", "4", "2", "1", "1"]);
        assert_eq!(doc.matches("gray70").count(), 1);
        assert!(doc.contains("0 [label=\"0\", shape=star"));
        assert!(doc.contains("3 [label=\"3\", shape=doublecircle"));
        assert!(doc.contains("5 [label=\"5\", shape=diamond"));
        assert_eq!(doc, export_dot(&inst, "example", &tree).unwrap());
    }

    #[test]
    fn empty_tree_lists_nodes_only() {
        let g = NetworkGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let inst = ProblemInstance::new(g, 0, DemandVector::empty(), 0).unwrap();
        let doc = export_dot(&inst, "none", &MulticastTree::new(0)).unwrap();
        assert!(!doc.contains("bold"));
        assert_eq!(doc.matches("[label=").count(), 3);
    }

    #[test]
    fn mismatched_tree_is_rejected() {
        let (inst, _) = example();
        let wrong_root = MulticastTree::from_edges(1, [(0, 1)]).unwrap();
        assert!(export_dot(&inst, "x", &wrong_root).is_err());
        let missing_edge = MulticastTree::from_edges(0, [(3, 0), (4, 3), (5, 0)]).unwrap();
        assert!(export_dot(&inst, "x", &missing_edge).is_err());
    }
}
