//! Seeded random instance generation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::instance::{DemandVector, ProblemInstance};

/// Range of the uniform unit edge-cost distribution.
pub const COST_RANGE: (f64, f64) = (0.1, 1.0);

/// Restart budget shared by the regular-graph sampler and connectivity retries.
pub const MAX_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Topology {
    /// Every node has exactly `degree` neighbours.
    RandomRegular { degree: usize },
    /// Each pair is joined independently with probability `p`.
    ErdosRenyi { p: f64 },
    /// Erdős–Rényi with `p = degree / (n - 1)`.
    AverageDegree { degree: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandRule {
    /// High/medium/low for the first/middle/last third of users.
    Thirds,
    /// One level per user, in sampling order.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub topology: Topology,
    pub node_count: usize,
    pub user_count: usize,
    pub demand_rule: DemandRule,
    pub seed: u64,
    /// Resample the graph until it is connected.
    #[serde(default)]
    pub require_connected: bool,
}

impl GenConfig {
    pub fn new(topology: Topology, node_count: usize, user_count: usize, seed: u64) -> Self {
        GenConfig {
            topology,
            node_count,
            user_count,
            demand_rule: DemandRule::Thirds,
            seed,
            require_connected: false,
        }
    }

    pub fn connected(mut self) -> Self {
        self.require_connected = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count;
        if n == 0 {
            return Err(Error::InvalidConfig("node_count must be positive".into()));
        }
        if self.user_count >= n {
            return Err(Error::InvalidConfig(format!(
                "{} users do not fit in {} non-source nodes",
                self.user_count,
                n - 1
            )));
        }
        match self.topology {
            Topology::RandomRegular { degree } => {
                if (n * degree) % 2 != 0 {
                    return Err(Error::InvalidConfig(format!(
                        "random-regular graph needs n*d even, got n={n}, d={degree}"
                    )));
                }
                if degree >= n {
                    return Err(Error::InvalidConfig(format!(
                        "degree {degree} must be below node count {n}"
                    )));
                }
            }
            Topology::ErdosRenyi { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidConfig(format!("p must lie in (0, 1], got {p}")));
                }
            }
            Topology::AverageDegree { degree } => {
                if !(degree >= 2.0) {
                    return Err(Error::InvalidConfig(format!(
                        "average degree must be at least 2, got {degree}"
                    )));
                }
                if n < 2 || degree / (n - 1) as f64 > 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "average degree {degree} impossible with {n} nodes"
                    )));
                }
            }
        }
        if let DemandRule::Explicit(levels) = &self.demand_rule {
            if levels.len() != self.user_count {
                return Err(Error::InvalidConfig(format!(
                    "explicit demand list has {} entries for {} users",
                    levels.len(),
                    self.user_count
                )));
            }
        }
        Ok(())
    }
}

/// Demand levels by user index: 1.0 below `ceil(K/3)`, 0.5 below
/// `ceil(2K/3)`, 0.25 otherwise.
pub fn assign_demands(user_count: usize) -> Vec<f64> {
    let first = user_count.div_ceil(3);
    let second = (2 * user_count).div_ceil(3);
    (0..user_count)
        .map(|i| {
            if i < first {
                1.0
            } else if i < second {
                0.5
            } else {
                0.25
            }
        })
        .collect()
}

/// Generates an instance: source is node 0, destinations are sampled
/// uniformly without replacement from the other nodes.
pub fn generate_instance(config: &GenConfig) -> Result<ProblemInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.node_count;

    let mut attempts = 0;
    let graph = loop {
        attempts += 1;
        let edges = match config.topology {
            Topology::RandomRegular { degree } => random_regular_edges(n, degree, &mut rng)?,
            Topology::ErdosRenyi { p } => erdos_renyi_edges(n, p, &mut rng),
            Topology::AverageDegree { degree } => {
                erdos_renyi_edges(n, degree / (n - 1) as f64, &mut rng)
            }
        };
        let weighted: Vec<_> = edges
            .into_iter()
            .map(|(u, v)| (u, v, rng.gen_range(COST_RANGE.0..=COST_RANGE.1)))
            .collect();
        let graph = NetworkGraph::from_edges(n, weighted)?;
        if !config.require_connected || graph.is_connected() {
            break graph;
        }
        if attempts >= MAX_RETRIES {
            return Err(Error::GenerationFailed {
                attempts,
                reason: "no connected graph sampled".into(),
            });
        }
    };

    let mut candidates: Vec<NodeId> = (1..n).collect();
    let (chosen, _) = candidates.partial_shuffle(&mut rng, config.user_count);
    let levels = match &config.demand_rule {
        DemandRule::Thirds => assign_demands(config.user_count),
        DemandRule::Explicit(levels) => levels.clone(),
    };
    let demands = DemandVector::new(chosen.iter().copied().zip(levels).collect())?;
    ProblemInstance::new(graph, 0, demands, config.seed)
}

fn erdos_renyi_edges(n: usize, p: f64, rng: &mut impl Rng) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(p.min(1.0)) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Uniform-in-the-limit random `degree`-regular graph (Steger–Wormald
/// pairing): stubs are paired at random, unusable pairs are returned to the
/// pool, and the attempt restarts if the pool can no longer be paired.
fn random_regular_edges(
    n: usize,
    degree: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(NodeId, NodeId)>> {
    if degree == 0 {
        return Ok(Vec::new());
    }
    for _ in 0..MAX_RETRIES {
        if let Some(edges) = try_regular(n, degree, rng) {
            return Ok(edges.into_iter().collect());
        }
    }
    Err(Error::GenerationFailed {
        attempts: MAX_RETRIES,
        reason: format!("could not pair stubs into a simple {degree}-regular graph on {n} nodes"),
    })
}

fn try_regular(n: usize, degree: usize, rng: &mut impl Rng) -> Option<BTreeSet<(NodeId, NodeId)>> {
    let mut edges = BTreeSet::new();
    let mut stubs: Vec<NodeId> = (0..n).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    while !stubs.is_empty() {
        let mut leftover: BTreeMap<NodeId, usize> = BTreeMap::new();
        stubs.shuffle(rng);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a != b && !edges.contains(&(a, b)) {
                edges.insert((a, b));
            } else {
                *leftover.entry(a).or_default() += 1;
                *leftover.entry(b).or_default() += 1;
            }
        }
        if !leftover.is_empty() && !pairable(&edges, &leftover) {
            return None;
        }
        stubs = leftover
            .iter()
            .flat_map(|(&v, &k)| std::iter::repeat_n(v, k))
            .collect();
    }
    Some(edges)
}

fn pairable(edges: &BTreeSet<(NodeId, NodeId)>, leftover: &BTreeMap<NodeId, usize>) -> bool {
    let nodes: Vec<NodeId> = leftover.keys().copied().collect();
    nodes.iter().enumerate().any(|(i, &a)| {
        nodes[i + 1..].iter().any(|&b| !edges.contains(&(a, b)))
    })
}
