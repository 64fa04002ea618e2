//! Undirected weighted network graph with an optional virtual hub.

use crate::error::{Error, Result};

/// Dense node identifier in `0..node_count`.
pub type NodeId = usize;

/// Effective unit cost of every edge incident to the virtual hub.
pub const HUB_COST: f64 = 10.0;

/// An undirected edge stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub cost: f64,
}

impl Edge {
    pub fn other(&self, node: NodeId) -> NodeId {
        if node == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Undirected graph with non-negative unit transmission costs.
///
/// Edges are kept sorted by `(u, v)` and adjacency lists are sorted by
/// neighbour id, so every iteration order is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    hub: Option<NodeId>,
}

impl NetworkGraph {
    /// Builds a graph, rejecting self-loops, duplicate edges, out-of-range
    /// endpoints and negative or non-finite costs.
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId, f64)>,
    ) -> Result<Self> {
        Self::build(node_count, edges, None)
    }

    fn build(
        node_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId, f64)>,
        hub: Option<NodeId>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut list = Vec::new();
        for (a, b, cost) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if !cost.is_finite() {
                return Err(Error::Validation("non-finite edge cost".into()));
            }
            if cost < 0.0 {
                return Err(Error::Validation("negative edge cost".into()));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            list.push(Edge { u, v, cost });
        }
        list.sort_by_key(|e| (e.u, e.v));
        if let Some(w) = list.windows(2).find(|w| w[0].u == w[1].u && w[0].v == w[1].v) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].u, w[0].v
            )));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &list {
            adjacency[e.u].push((e.v, e.cost));
            adjacency[e.v].push((e.u, e.cost));
        }
        for nbrs in &mut adjacency {
            nbrs.sort_by_key(|&(n, _)| n);
        }
        let graph = NetworkGraph {
            node_count,
            edges: list,
            adjacency,
            hub,
        };
        if let Some(h) = hub {
            if h >= node_count || graph.degree(h) != node_count - 1 {
                return Err(Error::InvalidGraph(format!(
                    "hub {h} is not adjacent to every other node"
                )));
            }
        }
        Ok(graph)
    }

    /// Rebuilds a graph whose edge list already contains the hub edges.
    pub fn with_declared_hub(
        node_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId, f64)>,
        hub: NodeId,
    ) -> Result<Self> {
        Self::build(node_count, edges, Some(hub))
    }

    /// Returns a copy with a new node adjacent to every existing node at
    /// cost [`HUB_COST`].
    pub fn attach_hub(&self) -> Result<Self> {
        if self.hub.is_some() {
            return Err(Error::InvalidGraph("virtual hub already attached".into()));
        }
        let hub = self.node_count;
        let edges = self
            .edges
            .iter()
            .map(|e| (e.u, e.v, e.cost))
            .chain((0..self.node_count).map(|v| (v, hub, HUB_COST)));
        Self::build(self.node_count + 1, edges, Some(hub))
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn hub(&self) -> Option<NodeId> {
        self.hub
    }

    pub fn is_hub(&self, v: NodeId) -> bool {
        self.hub == Some(v)
    }

    pub fn contains_node(&self, v: NodeId) -> bool {
        v < self.node_count
    }

    /// Cost of edge `{a, b}`, if present.
    pub fn cost(&self, a: NodeId, b: NodeId) -> Option<f64> {
        if a >= self.node_count {
            return None;
        }
        let nbrs = &self.adjacency[a];
        nbrs.binary_search_by_key(&b, |&(n, _)| n)
            .ok()
            .map(|i| nbrs[i].1)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.cost(a, b).is_some()
    }

    /// Component label per node (labels are the smallest node id in the component).
    pub fn components(&self) -> Vec<NodeId> {
        let mut label = vec![usize::MAX; self.node_count];
        for start in 0..self.node_count {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = start;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adjacency[v] {
                    if label[w] == usize::MAX {
                        label[w] = start;
                        stack.push(w);
                    }
                }
            }
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// Largest non-hub edge cost (1.0 for graphs without such edges).
    pub fn max_regular_cost(&self) -> f64 {
        let max = self
            .edges
            .iter()
            .filter(|e| !self.is_hub(e.u) && !self.is_hub(e.v))
            .map(|e| e.cost)
            .fold(0.0, f64::max);
        if max > 0.0 {
            max
        } else {
            1.0
        }
    }

    /// Degree of `v` not counting its hub edge.
    pub fn regular_degree(&self, v: NodeId) -> usize {
        match self.hub {
            Some(h) if h == v => 0,
            Some(_) => self.degree(v) - 1,
            None => self.degree(v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> NetworkGraph {
        NetworkGraph::from_edges(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0), (3, 0, 4.0)]).unwrap()
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(NetworkGraph::from_edges(3, [(1, 1, 1.0)]).is_err());
        assert!(NetworkGraph::from_edges(3, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        let err = NetworkGraph::from_edges(3, [(0, 1, -1.0)]).unwrap_err();
        assert!(err.to_string().contains("negative edge cost"));
    }

    #[test]
    fn cost_lookup_is_symmetric() {
        let g = square();
        assert_eq!(g.cost(3, 0), Some(4.0));
        assert_eq!(g.cost(0, 3), Some(4.0));
        assert_eq!(g.cost(0, 2), None);
    }

    #[test]
    fn hub_attachment_adds_one_edge_per_node() {
        let g = square();
        let h = g.attach_hub().unwrap();
        assert_eq!(h.node_count(), 5);
        assert_eq!(h.edge_count(), g.edge_count() + 4);
        assert_eq!(h.hub(), Some(4));
        for v in 0..4 {
            assert_eq!(h.degree(v), g.degree(v) + 1);
            assert_eq!(h.cost(v, 4), Some(HUB_COST));
        }
        assert!(h.attach_hub().is_err());
    }

    #[test]
    fn hub_connects_disconnected_graph() {
        let g = NetworkGraph::from_edges(4, [(0, 1, 1.0)]).unwrap();
        assert!(!g.is_connected());
        assert!(g.attach_hub().unwrap().is_connected());
    }

    #[test]
    fn single_node_hub() {
        let g = NetworkGraph::from_edges(1, []).unwrap();
        let h = g.attach_hub().unwrap();
        assert_eq!(h.edge_count(), 1);
    }
}
