//! Priority-queue shortest paths with configurable edge weights.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::graph::{NetworkGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (dist, node).
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances and predecessor links from a multi-source search.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub dist: Vec<f64>,
    pub pred: Vec<Option<NodeId>>,
}

impl ShortestPaths {
    pub fn reachable(&self, v: NodeId) -> bool {
        self.dist[v].is_finite()
    }

    /// Node sequence from `v` back to the source it was reached from.
    pub fn path_to_source(&self, v: NodeId) -> Option<Vec<NodeId>> {
        if !self.reachable(v) {
            return None;
        }
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.pred[cur] {
            path.push(p);
            cur = p;
        }
        Some(path)
    }
}

/// Dijkstra from several sources, each with its own starting distance.
///
/// `weight(u, v, cost)` gives the length of edge `u -> v`; it must be
/// non-negative. Nodes for which `blocked` returns true are never entered.
/// Ties are broken towards the smaller node id, so results are
/// deterministic.
pub fn dijkstra(
    graph: &NetworkGraph,
    sources: &[(NodeId, f64)],
    mut weight: impl FnMut(NodeId, NodeId, f64) -> f64,
    blocked: impl Fn(NodeId) -> bool,
) -> ShortestPaths {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(s, d) in sources {
        if d < dist[s] {
            dist[s] = d;
            heap.push(Entry { dist: d, node: s });
        }
    }
    while let Some(Entry { dist: d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        for &(v, cost) in graph.neighbors(u) {
            if done[v] || blocked(v) {
                continue;
            }
            let nd = d + weight(u, v, cost);
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(Entry { dist: nd, node: v });
            }
        }
    }
    ShortestPaths { dist, pred }
}

/// Plain cost-weighted single-source shortest paths.
pub fn shortest_paths_from(graph: &NetworkGraph, source: NodeId) -> ShortestPaths {
    dijkstra(graph, &[(source, 0.0)], |_, _, c| c, |_| false)
}
