//! Problem instances (graph, source, per-destination demands) and their
//! JSON interchange format.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};

/// Ordered per-destination demands.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandVector {
    entries: Vec<(NodeId, f64)>,
}

impl DemandVector {
    pub fn new(entries: Vec<(NodeId, f64)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &(node, demand) in &entries {
            if !seen.insert(node) {
                return Err(Error::InvalidInstance(format!("duplicate destination {node}")));
            }
            if !(demand.is_finite() && demand > 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "demand of destination {node} must be positive, got {demand}"
                )));
            }
        }
        Ok(DemandVector { entries })
    }

    pub fn empty() -> Self {
        DemandVector { entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(NodeId, f64)] {
        &self.entries
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.iter().map(|&(n, _)| n)
    }

    pub fn demand_of(&self, node: NodeId) -> Option<f64> {
        self.entries.iter().find(|&&(n, _)| n == node).map(|&(_, d)| d)
    }

    pub fn max_demand(&self) -> f64 {
        self.entries.iter().map(|&(_, d)| d).fold(0.0, f64::max)
    }

    /// Returns a copy with every demand multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.entries.iter().map(|&(n, d)| (n, d * factor)).collect())
    }

    /// Dense lookup table `node -> demand` (0 for non-destinations).
    pub fn dense(&self, node_count: usize) -> Vec<f64> {
        let mut out = vec![0.0; node_count];
        for &(n, d) in &self.entries {
            if n < node_count {
                out[n] = d;
            }
        }
        out
    }

    /// Users in routing order: demand descending, ties by ascending node id.
    pub fn descending_order(&self) -> Vec<(NodeId, f64)> {
        let mut users = self.entries.clone();
        users.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        users
    }
}

/// The tuple (graph, source, demands) plus the seed it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub graph: NetworkGraph,
    pub source: NodeId,
    pub demands: DemandVector,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn new(graph: NetworkGraph, source: NodeId, demands: DemandVector, seed: u64) -> Result<Self> {
        if !graph.contains_node(source) {
            return Err(Error::InvalidInstance(format!("source {source} is not a node")));
        }
        if graph.is_hub(source) {
            return Err(Error::InvalidInstance("the virtual hub cannot be the source".into()));
        }
        for node in demands.nodes() {
            if !graph.contains_node(node) {
                return Err(Error::InvalidInstance(format!("destination {node} is not a node")));
            }
            if node == source {
                return Err(Error::InvalidInstance(format!(
                    "destination {node} equals the source"
                )));
            }
            if graph.is_hub(node) {
                return Err(Error::InvalidInstance("the virtual hub cannot be a destination".into()));
            }
        }
        Ok(ProblemInstance {
            graph,
            source,
            demands,
            seed,
        })
    }

    /// Adds a virtual hub adjacent to every node.
    pub fn attach_virtual_hub(&self) -> Result<Self> {
        Ok(ProblemInstance {
            graph: self.graph.attach_hub()?,
            source: self.source,
            demands: self.demands.clone(),
            seed: self.seed,
        })
    }

    /// The same instance with the hub attached if it is not already.
    pub fn ensure_hub(&self) -> Self {
        if self.graph.hub().is_some() {
            self.clone()
        } else {
            self.attach_virtual_hub().expect("hub absent")
        }
    }

    pub fn with_demands(&self, demands: DemandVector) -> Result<Self> {
        Self::new(self.graph.clone(), self.source, demands, self.seed)
    }

    /// Destinations not connected to the source, in demand-vector order.
    pub fn unreachable_destinations(&self) -> Vec<NodeId> {
        let comp = self.graph.components();
        self.demands
            .nodes()
            .filter(|&d| comp[d] != comp[self.source])
            .collect()
    }

    pub fn check_reachable(&self) -> Result<()> {
        match self.unreachable_destinations().first() {
            Some(&d) => Err(Error::Unreachable(d)),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceDoc {
            version: FORMAT_VERSION,
            n: self.graph.node_count(),
            source: self.source,
            edges: self.graph.edges().iter().map(|e| (e.u, e.v, e.cost)).collect(),
            demands: self.demands.entries().to_vec(),
            hub: self.graph.hub(),
            seed: self.seed,
        };
        serde_json::to_string_pretty(&doc).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("malformed JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Parse("instance document must be an object".into()))?;
        let field = |name: &str| obj.get(name).ok_or_else(|| Error::Parse(format!("missing field: {name}")));
        let typed = |name: &str, v: &Value, what: &str| Error::Parse(format!("field {name}: expected {what}, got {v}"));

        let version = field("version")?;
        if version.as_u64() != Some(FORMAT_VERSION as u64) {
            return Err(Error::Parse(format!("field version: unsupported version {version}")));
        }
        let n_val = field("n")?;
        let n = n_val.as_u64().ok_or_else(|| typed("n", n_val, "non-negative integer"))? as usize;
        let src_val = field("source")?;
        let source = src_val
            .as_u64()
            .ok_or_else(|| typed("source", src_val, "node id"))? as usize;
        let seed_val = field("seed")?;
        let seed = seed_val.as_u64().ok_or_else(|| typed("seed", seed_val, "u64"))?;
        let hub = match field("hub")? {
            Value::Null => None,
            v => Some(v.as_u64().ok_or_else(|| typed("hub", v, "node id or null"))? as usize),
        };

        let edges_val = field("edges")?;
        let edges_arr = edges_val
            .as_array()
            .ok_or_else(|| typed("edges", edges_val, "array"))?;
        let mut edges = Vec::with_capacity(edges_arr.len());
        for (i, e) in edges_arr.iter().enumerate() {
            let triple = e.as_array().filter(|a| a.len() == 3).ok_or_else(|| {
                Error::Parse(format!("field edges[{i}]: expected [u, v, cost]"))
            })?;
            let u = triple[0].as_u64();
            let v = triple[1].as_u64();
            let c = triple[2].as_f64();
            match (u, v, c) {
                (Some(u), Some(v), Some(c)) => edges.push((u as usize, v as usize, c)),
                _ => return Err(Error::Parse(format!("field edges[{i}]: expected [u, v, cost]"))),
            }
        }

        let dem_val = field("demands")?;
        let dem_arr = dem_val
            .as_array()
            .ok_or_else(|| typed("demands", dem_val, "array"))?;
        let mut demands = Vec::with_capacity(dem_arr.len());
        for (i, d) in dem_arr.iter().enumerate() {
            let pair = d.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                Error::Parse(format!("field demands[{i}]: expected [node, level]"))
            })?;
            match (pair[0].as_u64(), pair[1].as_f64()) {
                (Some(node), Some(level)) => demands.push((node as usize, level)),
                _ => return Err(Error::Parse(format!("field demands[{i}]: expected [node, level]"))),
            }
        }

        let graph = match hub {
            Some(h) => NetworkGraph::with_declared_hub(n, edges, h)?,
            None => NetworkGraph::from_edges(n, edges)?,
        };
        Self::new(graph, source, DemandVector::new(demands)?, seed)
    }
}

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    version: u32,
    n: usize,
    source: NodeId,
    edges: Vec<(NodeId, NodeId, f64)>,
    demands: Vec<(NodeId, f64)>,
    hub: Option<NodeId>,
    seed: u64,
}
