//! Exact solvers: exhaustive edge-subset enumeration for tiny graphs and a
//! demand-weighted Dreyfus–Wagner subset dynamic program.
//!
//! The DP is exact because every tree edge above a terminal set `S` carries
//! `max_{k in S} x_k`, so a state `(S, v)` has a well-defined per-edge
//! multiplier when it grows along an edge.

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::instance::ProblemInstance;
use crate::tree::{prune, tree_cost, MulticastTree};

/// Largest edge count accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_EDGES: usize = 20;
/// Largest destination count accepted by [`dreyfus_wagner`].
pub const DP_MAX_TERMINALS: usize = 16;

/// A solver result.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub tree: MulticastTree,
    pub cost: f64,
    pub solver: String,
    /// Wall-clock seconds spent inside the solver.
    pub runtime: f64,
}

impl Solution {
    /// Wraps a tree, evaluating its cost on `instance`.
    pub fn from_tree(instance: &ProblemInstance, tree: MulticastTree, solver: &str, started: Instant) -> Result<Self> {
        let cost = tree_cost(&instance.graph, &tree, &instance.demands)?;
        Ok(Solution {
            tree,
            cost,
            solver: solver.to_string(),
            runtime: started.elapsed().as_secs_f64(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SolutionDoc {
            solver: self.solver.clone(),
            cost: self.cost,
            runtime: self.runtime,
            root: self.tree.root(),
            edges: self.tree.edges(),
        })
        .expect("solution serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SolutionDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Solution {
            tree: MulticastTree::from_edges(doc.root, doc.edges)?,
            cost: doc.cost,
            solver: doc.solver,
            runtime: doc.runtime,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionDoc {
    solver: String,
    cost: f64,
    runtime: f64,
    root: NodeId,
    edges: Vec<(NodeId, NodeId)>,
}

/// Enumerates every edge subset and keeps the cheapest tree that contains
/// the source and all destinations and whose leaves are all destinations.
/// Ties go to fewer edges, then to the lexicographically smallest edge list.
pub fn brute_force(instance: &ProblemInstance) -> Result<Solution> {
    let started = Instant::now();
    let graph = &instance.graph;
    let m = graph.edge_count();
    if m > BRUTE_FORCE_MAX_EDGES {
        return Err(Error::Budget(format!(
            "brute force enumerates 2^{m} subsets (limit {BRUTE_FORCE_MAX_EDGES} edges); use dreyfus_wagner"
        )));
    }
    instance.check_reachable()?;
    if instance.demands.is_empty() {
        return Solution::from_tree(instance, MulticastTree::new(instance.source), "bruteforce", started);
    }

    let n = graph.node_count();
    let edges = graph.edges();
    let is_dest = {
        let mut v = vec![false; n];
        for d in instance.demands.nodes() {
            v[d] = true;
        }
        v
    };
    let mut uf = UnionFind::new(n);
    let mut degree = vec![0usize; n];
    let mut best: Option<(f64, usize, Vec<usize>, MulticastTree)> = None;

    for mask in 1u32..(1u32 << m) {
        uf.reset();
        degree.iter_mut().for_each(|d| *d = 0);
        let chosen: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let mut acyclic = true;
        for &i in &chosen {
            let e = edges[i];
            if !uf.union(e.u, e.v) {
                acyclic = false;
                break;
            }
            degree[e.u] += 1;
            degree[e.v] += 1;
        }
        if !acyclic || degree[instance.source] == 0 {
            continue;
        }
        if instance.demands.nodes().any(|d| degree[d] == 0) {
            continue;
        }
        let touched = degree.iter().filter(|&&d| d > 0).count();
        if touched != chosen.len() + 1 {
            continue;
        }
        let relay_leaf = (0..n).any(|v| v != instance.source && degree[v] == 1 && !is_dest[v]);
        if relay_leaf {
            continue;
        }
        let tree = orient(instance, chosen.iter().map(|&i| (edges[i].u, edges[i].v)))?;
        let cost = tree_cost(graph, &tree, &instance.demands)?;
        let better = match &best {
            None => true,
            Some((bc, bl, be, _)) => {
                cost < *bc || (cost == *bc && (chosen.len(), &chosen) < (*bl, be))
            }
        };
        if better {
            best = Some((cost, chosen.len(), chosen, tree));
        }
    }
    let (_, _, _, tree) = best.ok_or_else(|| Error::Unreachable(instance.demands.entries()[0].0))?;
    Solution::from_tree(instance, tree, "bruteforce", started)
}

/// Orients an undirected edge set away from the source by BFS, keeping only
/// edges reached through the traversal.
fn orient(
    instance: &ProblemInstance,
    edges: impl IntoIterator<Item = (NodeId, NodeId)>,
) -> Result<MulticastTree> {
    let n = instance.graph.node_count();
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let mut parent = Vec::new();
    let mut seen = vec![false; n];
    seen[instance.source] = true;
    let mut queue = VecDeque::from([instance.source]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent.push((w, v));
                queue.push_back(w);
            }
        }
    }
    MulticastTree::from_edges(instance.source, parent)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i;
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// False if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Choice {
    Unset,
    Base,
    Merge(u32),
    Grow(u32),
}

/// Filled DP table; `value(S, v)` is the cheapest demand-weighted tree that
/// connects the terminals in bitmask `S` to node `v`.
#[derive(Debug, Clone)]
pub struct DwTable {
    node_count: usize,
    terminals: Vec<(NodeId, f64)>,
    value: Vec<f64>,
    choice: Vec<Choice>,
}

impl DwTable {
    pub fn terminals(&self) -> &[(NodeId, f64)] {
        &self.terminals
    }

    pub fn value(&self, subset: usize, v: NodeId) -> f64 {
        self.value[subset * self.node_count + v]
    }

    fn choice(&self, subset: usize, v: NodeId) -> Choice {
        self.choice[subset * self.node_count + v]
    }

    /// Undirected edges of the tree behind `value(subset, root)`.
    fn edges(&self, subset: usize, root: NodeId) -> BTreeSet<(NodeId, NodeId)> {
        let mut out = BTreeSet::new();
        let mut stack = vec![(subset, root)];
        while let Some((s, v)) = stack.pop() {
            match self.choice(s, v) {
                Choice::Unset | Choice::Base => {}
                Choice::Merge(sub) => {
                    stack.push((sub as usize, v));
                    stack.push((s ^ sub as usize, v));
                }
                Choice::Grow(u) => {
                    let u = u as usize;
                    out.insert((u.min(v), u.max(v)));
                    stack.push((s, u));
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, NodeId);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs the subset DP over all destinations of `instance`.
pub fn dreyfus_wagner_table(instance: &ProblemInstance) -> Result<DwTable> {
    let terminals = instance.demands.entries().to_vec();
    let k = terminals.len();
    if k > DP_MAX_TERMINALS {
        return Err(Error::Budget(format!(
            "{k} destinations exceed the subset DP limit of {DP_MAX_TERMINALS}"
        )));
    }
    instance.check_reachable()?;
    let graph = &instance.graph;
    let n = graph.node_count();
    let subsets = 1usize << k;
    let mut value = vec![f64::INFINITY; subsets * n];
    let mut choice = vec![Choice::Unset; subsets * n];

    let mut max_demand = vec![0.0f64; subsets];
    for s in 1..subsets {
        let low = s.trailing_zeros() as usize;
        max_demand[s] = max_demand[s & (s - 1)].max(terminals[low].1);
    }
    for (t, &(node, _)) in terminals.iter().enumerate() {
        value[(1 << t) * n + node] = 0.0;
        choice[(1 << t) * n + node] = Choice::Base;
    }

    let mut heap = BinaryHeap::new();
    let mut done = vec![false; n];
    for s in 1..subsets {
        let row = s * n;
        if s & (s - 1) != 0 {
            let low = s & s.wrapping_neg();
            for v in 0..n {
                let mut best = value[row + v];
                let mut arg = choice[row + v];
                let mut sub = (s - 1) & s;
                while sub > 0 {
                    if sub & low != 0 {
                        let cand = value[sub * n + v] + value[(s ^ sub) * n + v];
                        if cand < best {
                            best = cand;
                            arg = Choice::Merge(sub as u32);
                        }
                    }
                    sub = (sub - 1) & s;
                }
                value[row + v] = best;
                choice[row + v] = arg;
            }
        }

        let mult = max_demand[s];
        heap.clear();
        done.iter_mut().for_each(|d| *d = false);
        for v in 0..n {
            if value[row + v].is_finite() {
                heap.push(HeapItem(value[row + v], v));
            }
        }
        while let Some(HeapItem(d, u)) = heap.pop() {
            if done[u] || d > value[row + u] {
                continue;
            }
            done[u] = true;
            for &(w, cost) in graph.neighbors(u) {
                let nd = d + cost * mult;
                if !done[w] && nd < value[row + w] {
                    value[row + w] = nd;
                    choice[row + w] = Choice::Grow(u as u32);
                    heap.push(HeapItem(nd, w));
                }
            }
        }
    }

    Ok(DwTable {
        node_count: n,
        terminals,
        value,
        choice,
    })
}

/// Optimal demand-weighted multicast tree by subset dynamic programming.
pub fn dreyfus_wagner(instance: &ProblemInstance) -> Result<Solution> {
    let started = Instant::now();
    if instance.demands.is_empty() {
        return Solution::from_tree(instance, MulticastTree::new(instance.source), "dp", started);
    }
    let table = dreyfus_wagner_table(instance)?;
    let full = (1usize << table.terminals.len()) - 1;
    let edges = table.edges(full, instance.source);
    let tree = orient(instance, edges.iter().copied())?;
    // Overlapping sub-trees only arise with zero-cost edges; pruning restores
    // a tree whose leaves are destinations.
    let tree = prune(&tree, &instance.demands)?;
    Solution::from_tree(instance, tree, "dp", started)
}
