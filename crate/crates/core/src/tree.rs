//! Source-rooted multicast trees, max-downstream-demand flows and the
//! total flow cost objective.
//!
//! Every edge of a multicast tree carries the largest demand among the
//! destinations below it. Costs are accumulated in exact rational arithmetic
//! and rounded once, so two evaluations of the same real quantity agree
//! bit-for-bit regardless of summation order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::instance::DemandVector;

/// A tree given by parent links over the included nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticastTree {
    root: NodeId,
    parent: BTreeMap<NodeId, NodeId>,
}

impl MulticastTree {
    /// The tree containing only `root`.
    pub fn new(root: NodeId) -> Self {
        MulticastTree {
            root,
            parent: BTreeMap::new(),
        }
    }

    /// Builds a tree from `(child, parent)` pairs. Structural problems other
    /// than a repeated child are left for [`validate`] to report.
    pub fn from_edges(root: NodeId, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut parent = BTreeMap::new();
        for (child, par) in edges {
            if child == root {
                return Err(Error::InvalidTree(format!("root {root} cannot have a parent")));
            }
            if parent.insert(child, par).is_some() {
                return Err(Error::InvalidTree(format!("node {child} has two parents")));
            }
        }
        Ok(MulticastTree { root, parent })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent.get(&v).copied()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v == self.root || self.parent.contains_key(&v)
    }

    /// Root first, then the remaining nodes in ascending order.
    pub fn nodes(&self) -> Vec<NodeId> {
        std::iter::once(self.root)
            .chain(self.parent.keys().copied())
            .collect()
    }

    /// `(child, parent)` pairs ordered by child.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.parent.iter().map(|(&c, &p)| (c, p)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len()
    }

    pub fn children(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut out: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (&c, &p) in &self.parent {
            out.entry(p).or_default().push(c);
        }
        out
    }

    /// Nodes in breadth-first order from the root. Fails if some node does
    /// not reach the root through its parent links.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        let children = self.children();
        let mut order = Vec::with_capacity(self.parent.len() + 1);
        let mut queue = VecDeque::from([self.root]);
        let mut seen = BTreeSet::from([self.root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in children.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        if order.len() != self.parent.len() + 1 {
            return Err(Error::InvalidTree(
                "parent links contain a cycle or a detached component".into(),
            ));
        }
        Ok(order)
    }

    /// Attaches `path` to the tree. The path starts at a node outside the
    /// tree and its last node is the attachment point already in the tree;
    /// every earlier node becomes the child of its successor.
    pub fn merge_path(&self, path: &[NodeId]) -> Result<Self> {
        let mut out = self.clone();
        out.merge_path_in_place(path)?;
        Ok(out)
    }

    pub fn merge_path_in_place(&mut self, path: &[NodeId]) -> Result<()> {
        let Some((&anchor, body)) = path.split_last() else {
            return Err(Error::InvalidPath("empty path".into()));
        };
        if body.is_empty() {
            return Err(Error::InvalidPath("path needs at least two nodes".into()));
        }
        if !self.contains(anchor) {
            return Err(Error::InvalidPath(format!("path end {anchor} is not in the tree")));
        }
        let mut seen = BTreeSet::new();
        for &v in body {
            if self.contains(v) {
                return Err(Error::InvalidPath(format!(
                    "path touches the tree at {v} before its last node"
                )));
            }
            if !seen.insert(v) {
                return Err(Error::InvalidPath(format!("path repeats node {v}")));
            }
        }
        for w in path.windows(2) {
            self.parent.insert(w[0], w[1]);
        }
        Ok(())
    }

    /// Nodes on the way from `v` up to the root, starting with `v`.
    fn root_path(&self, v: NodeId) -> Result<Vec<NodeId>> {
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            if path.len() > self.parent.len() + 1 {
                return Err(Error::InvalidTree("cycle in parent links".into()));
            }
            path.push(p);
            cur = p;
        }
        Ok(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TreeDoc {
            root: self.root,
            edges: self.edges(),
        })
        .expect("tree serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TreeDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_edges(doc.root, doc.edges)
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    root: NodeId,
    edges: Vec<(NodeId, NodeId)>,
}

/// Flow per directed tree edge `(parent, child)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowAssignment {
    flows: BTreeMap<(NodeId, NodeId), f64>,
}

impl FlowAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, parent: NodeId, child: NodeId, flow: f64) {
        self.flows.insert((parent, child), flow);
    }

    pub fn get(&self, parent: NodeId, child: NodeId) -> Option<f64> {
        self.flows.get(&(parent, child)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), f64)> + '_ {
        self.flows.iter().map(|(&k, &f)| (k, f))
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

fn missing_destinations(tree: &MulticastTree, demands: &DemandVector) -> Vec<NodeId> {
    demands.nodes().filter(|&d| !tree.contains(d)).collect()
}

/// Flow on edge `p -> c` is the largest demand of any destination in the
/// subtree rooted at `c`; edges with no destination below them carry none.
pub fn compute_flows(tree: &MulticastTree, demands: &DemandVector) -> Result<FlowAssignment> {
    let missing = missing_destinations(tree, demands);
    if !missing.is_empty() {
        return Err(Error::MissingDestinations(missing));
    }
    let order = tree.topological_order()?;
    let mut below: BTreeMap<NodeId, f64> = demands.entries().iter().copied().collect();
    let mut flows = FlowAssignment::new();
    for &v in order.iter().rev() {
        let Some(p) = tree.parent(v) else { continue };
        let f = below.get(&v).copied().unwrap_or(0.0);
        if f > 0.0 {
            flows.set(p, v, f);
            let up = below.entry(p).or_insert(0.0);
            *up = up.max(f);
        }
    }
    Ok(flows)
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

fn round(x: &BigRational) -> f64 {
    x.to_f64().expect("finite rational")
}

fn edge_cost(graph: &NetworkGraph, a: NodeId, b: NodeId) -> Result<f64> {
    graph.cost(a, b).ok_or(Error::MissingEdge(a, b))
}

/// Total flow cost: sum over tree edges of unit cost times flow.
pub fn tree_cost(graph: &NetworkGraph, tree: &MulticastTree, demands: &DemandVector) -> Result<f64> {
    let flows = compute_flows(tree, demands)?;
    for (c, p) in tree.edges() {
        edge_cost(graph, c, p)?;
    }
    let mut total = BigRational::zero();
    for ((p, c), f) in flows.iter() {
        total += exact(edge_cost(graph, p, c)?) * exact(f);
    }
    Ok(round(&total))
}

/// The same objective evaluated level by level: for demand levels
/// `l_1 < ... < l_m` (with `l_0 = 0`), sum `(l_j - l_{j-1})` times the
/// cost of the subtree spanning the root and every destination whose
/// demand is at least `l_j`.
pub fn level_decomposition_cost(
    graph: &NetworkGraph,
    tree: &MulticastTree,
    demands: &DemandVector,
) -> Result<f64> {
    let missing = missing_destinations(tree, demands);
    if !missing.is_empty() {
        return Err(Error::MissingDestinations(missing));
    }
    for (c, p) in tree.edges() {
        edge_cost(graph, c, p)?;
    }
    let levels: BTreeSet<u64> = demands.entries().iter().map(|e| e.1.to_bits()).collect();
    let mut levels: Vec<f64> = levels.into_iter().map(f64::from_bits).collect();
    levels.sort_by(f64::total_cmp);

    let mut total = BigRational::zero();
    let mut prev = BigRational::zero();
    for level in levels {
        let mut span: BTreeSet<NodeId> = BTreeSet::new();
        for &(d, x) in demands.entries() {
            if x >= level {
                for v in tree.root_path(d)? {
                    if v != tree.root() {
                        span.insert(v);
                    }
                }
            }
        }
        let mut span_cost = BigRational::zero();
        for &c in &span {
            let p = tree.parent(c).expect("non-root span node has a parent");
            span_cost += exact(edge_cost(graph, c, p)?);
        }
        let l = exact(level);
        total += (&l - &prev) * span_cost;
        prev = l;
    }
    Ok(round(&total))
}

/// Structural and flow feasibility checks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub is_tree: bool,
    pub is_rooted_connected: bool,
    pub leaves_are_destinations: bool,
    pub demands_satisfied: bool,
    pub conservation_holds: bool,
    pub edges_exist: bool,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validates `tree` using the flows implied by max-downstream-demand.
pub fn validate(
    graph: &NetworkGraph,
    tree: &MulticastTree,
    source: NodeId,
    demands: &DemandVector,
) -> ValidationReport {
    let flows = compute_flows(tree, demands).unwrap_or_default();
    validate_with_flows(graph, tree, source, demands, &flows)
}

/// Validates `tree` against an explicit flow assignment.
pub fn validate_with_flows(
    graph: &NetworkGraph,
    tree: &MulticastTree,
    source: NodeId,
    demands: &DemandVector,
    flows: &FlowAssignment,
) -> ValidationReport {
    let mut v = Vec::new();

    let is_tree = match tree.topological_order() {
        Ok(_) => true,
        Err(_) => {
            v.push("parent links are not a tree rooted at the root".to_string());
            false
        }
    };

    let mut is_rooted_connected = true;
    if tree.root() != source {
        is_rooted_connected = false;
        v.push(format!("tree root {} is not the source {source}", tree.root()));
    }
    for node in tree.nodes() {
        match tree.root_path(node) {
            Ok(path) if *path.last().unwrap() == tree.root() => {}
            _ => {
                is_rooted_connected = false;
                v.push(format!("node {node} does not reach the root"));
            }
        }
    }

    let mut edges_exist = true;
    for (c, p) in tree.edges() {
        if !graph.has_edge(c, p) {
            edges_exist = false;
            v.push(format!("tree edge ({p}, {c}) is not in the graph"));
        }
    }

    let children = tree.children();
    let mut leaves_are_destinations = true;
    for node in tree.nodes() {
        if node != tree.root() && !children.contains_key(&node) && demands.demand_of(node).is_none() {
            leaves_are_destinations = false;
            v.push(format!("leaf {node} is not a destination"));
        }
    }

    let inflow = |node: NodeId| tree.parent(node).and_then(|p| flows.get(p, node)).unwrap_or(0.0);

    let mut demands_satisfied = true;
    for &(d, x) in demands.entries() {
        if !tree.contains(d) {
            demands_satisfied = false;
            v.push(format!("destination {d} is not in the tree"));
        } else if inflow(d) < x {
            demands_satisfied = false;
            v.push(format!("destination {d} receives {} < demand {x}", inflow(d)));
        }
    }

    let mut conservation_holds = true;
    for ((p, c), f) in flows.iter() {
        if tree.parent(c) != Some(p) {
            conservation_holds = false;
            v.push(format!("flow on non-tree edge ({p}, {c})"));
        }
        if !(f > 0.0) {
            conservation_holds = false;
            v.push(format!("non-positive flow {f} on ({p}, {c})"));
        }
    }
    for node in tree.nodes() {
        if node == source {
            continue;
        }
        let out = children
            .get(&node)
            .into_iter()
            .flatten()
            .filter_map(|&c| flows.get(node, c))
            .fold(0.0, f64::max);
        if out > inflow(node) {
            conservation_holds = false;
            v.push(format!(
                "node {node} forwards {out} but receives only {}",
                inflow(node)
            ));
        }
    }

    ValidationReport {
        is_tree,
        is_rooted_connected,
        leaves_are_destinations,
        demands_satisfied,
        conservation_holds,
        edges_exist,
        violations: v,
    }
}

/// Removes branches that carry no destination, turning relay leaves into
/// nothing. Used to normalise solver output.
pub fn prune(tree: &MulticastTree, demands: &DemandVector) -> Result<MulticastTree> {
    let flows = compute_flows(tree, demands)?;
    MulticastTree::from_edges(
        tree.root(),
        tree.edges()
            .into_iter()
            .filter(|&(c, p)| flows.get(p, c).is_some()),
    )
}
