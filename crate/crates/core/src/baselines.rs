//! Classical heuristics: shortest-path overlay, sequential greedy
//! attachment, a permutation genetic algorithm and bee-colony optimization.

use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::Solution;
use crate::graph::{NetworkGraph, NodeId};
use crate::instance::{DemandVector, ProblemInstance};
use crate::paths::{dijkstra, shortest_paths_from};
use crate::tree::{compute_flows, MulticastTree};

/// Routes every destination along its own cost-weighted shortest path to the
/// source and overlays the paths. All paths come from one shortest-path tree,
/// so the overlay is itself a tree; reuse only shows up in the accounting.
pub fn dijkstra_reuse(instance: &ProblemInstance) -> Result<Solution> {
    let started = Instant::now();
    instance.check_reachable()?;
    let sp = shortest_paths_from(&instance.graph, instance.source);
    let mut edges = std::collections::BTreeSet::new();
    for d in instance.demands.nodes() {
        let path = sp.path_to_source(d).ok_or(Error::Unreachable(d))?;
        for w in path.windows(2) {
            edges.insert((w[0], w[1]));
        }
    }
    let tree = MulticastTree::from_edges(instance.source, edges)?;
    Solution::from_tree(instance, tree, "dijkstra", started)
}

/// Incrementally grown tree with per-node inflow, used by every sequential
/// heuristic. Attaching a user costs the new path at the user's demand plus
/// whatever is needed to raise existing edges on the way to the root.
#[derive(Debug, Clone)]
pub struct Attacher<'a> {
    graph: &'a NetworkGraph,
    root: NodeId,
    parent: Vec<Option<NodeId>>,
    edge_cost: Vec<f64>,
    inflow: Vec<f64>,
    in_tree: Vec<bool>,
    order: Vec<NodeId>,
    cost: f64,
}

impl<'a> Attacher<'a> {
    pub fn new(graph: &'a NetworkGraph, root: NodeId) -> Self {
        let n = graph.node_count();
        let mut in_tree = vec![false; n];
        in_tree[root] = true;
        Attacher {
            graph,
            root,
            parent: vec![None; n],
            edge_cost: vec![0.0; n],
            inflow: vec![0.0; n],
            in_tree,
            order: vec![root],
            cost: 0.0,
        }
    }

    /// Starts from an existing tree whose inflows follow `demands`.
    pub fn from_tree(graph: &'a NetworkGraph, tree: &MulticastTree, demands: &DemandVector) -> Result<Self> {
        let flows = compute_flows(tree, demands)?;
        let mut att = Attacher::new(graph, tree.root());
        for v in tree.topological_order()? {
            let Some(p) = tree.parent(v) else { continue };
            let c = graph.cost(v, p).ok_or(Error::MissingEdge(v, p))?;
            let f = flows.get(p, v).unwrap_or(0.0);
            att.parent[v] = Some(p);
            att.edge_cost[v] = c;
            att.inflow[v] = f;
            att.in_tree[v] = true;
            att.order.push(v);
            att.cost += c * f;
        }
        Ok(att)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.in_tree.get(v).copied().unwrap_or(false)
    }

    /// Running cost of the tree (incremental floating-point sum).
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn tree(&self) -> MulticastTree {
        let edges = self.order.iter().filter_map(|&v| self.parent[v].map(|p| (v, p)));
        MulticastTree::from_edges(self.root, edges).expect("attacher keeps a valid tree")
    }

    fn upgrade(&mut self, mut v: NodeId, x: f64) -> f64 {
        let mut added = 0.0;
        while let Some(p) = self.parent[v] {
            if self.inflow[v] < x {
                added += self.edge_cost[v] * (x - self.inflow[v]);
                self.inflow[v] = x;
            }
            v = p;
        }
        added
    }

    /// Connects `user` with demand `x` by the cheapest path into the tree and
    /// returns the added cost.
    pub fn attach(&mut self, user: NodeId, x: f64) -> Result<f64> {
        if !self.graph.contains_node(user) {
            return Err(Error::InvalidInstance(format!("destination {user} is not a node")));
        }
        if self.in_tree[user] {
            let added = self.upgrade(user, x);
            self.cost += added;
            return Ok(added);
        }
        let n = self.graph.node_count();
        let mut up = vec![0.0; n];
        for &v in &self.order {
            if let Some(p) = self.parent[v] {
                up[v] = up[p] + self.edge_cost[v] * (x - self.inflow[v]).max(0.0);
            }
        }
        let sources: Vec<(NodeId, f64)> = self.order.iter().map(|&v| (v, up[v])).collect();
        let in_tree = &self.in_tree;
        let sp = dijkstra(self.graph, &sources, |_, _, c| c * x, |v| in_tree[v]);
        let path = sp.path_to_source(user).ok_or(Error::Unreachable(user))?;
        let anchor = *path.last().expect("path is non-empty");
        let mut added = self.upgrade(anchor, x);
        for w in path.windows(2).rev() {
            let (child, par) = (w[0], w[1]);
            let c = self.graph.cost(child, par).ok_or(Error::MissingEdge(child, par))?;
            self.parent[child] = Some(par);
            self.edge_cost[child] = c;
            self.inflow[child] = x;
            self.in_tree[child] = true;
            self.order.push(child);
            added += c * x;
        }
        self.cost += added;
        Ok(added)
    }
}

/// Attaches users in the given order and returns the tree and its running cost.
pub fn attach_in_order(instance: &ProblemInstance, order: &[(NodeId, f64)]) -> Result<(MulticastTree, f64)> {
    let mut att = Attacher::new(&instance.graph, instance.source);
    for &(u, x) in order {
        att.attach(u, x)?;
    }
    Ok((att.tree(), att.cost()))
}

/// Sequential greedy: users by descending demand, each attached by the
/// cheapest incremental path to the tree built so far.
pub fn sequential_greedy(instance: &ProblemInstance) -> Result<Solution> {
    let started = Instant::now();
    instance.check_reachable()?;
    let (tree, _) = attach_in_order(instance, &instance.demands.descending_order())?;
    Solution::from_tree(instance, tree, "greedy", started)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            generations: 200,
            crossover_rate: 0.9,
            mutation_rate: 0.5,
            tournament_size: 3,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidConfig("GA population must be at least 2".into()));
        }
        for (name, r) in [("crossover rate", self.crossover_rate), ("mutation rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!("GA {name} must lie in [0, 1], got {r}")));
            }
        }
        if self.tournament_size == 0 {
            return Err(Error::InvalidConfig("GA tournament size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcoConfig {
    pub colony_size: usize,
    pub employed_fraction: f64,
    pub scout_limit: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BcoConfig {
    fn default() -> Self {
        BcoConfig {
            colony_size: 30,
            employed_fraction: 0.5,
            scout_limit: 20,
            iterations: 200,
            seed: 0,
        }
    }
}

impl BcoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.employed_fraction > 0.0 && self.employed_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "BCO employed fraction must lie in (0, 1), got {}",
                self.employed_fraction
            )));
        }
        if self.scout_limit < 1 {
            return Err(Error::InvalidConfig("BCO scout limit must be at least 1".into()));
        }
        if self.employed() == 0 {
            return Err(Error::InvalidConfig("BCO colony has no employed bees".into()));
        }
        Ok(())
    }

    pub fn employed(&self) -> usize {
        ((self.colony_size as f64) * self.employed_fraction).round() as usize
    }

    pub fn onlookers(&self) -> usize {
        self.colony_size.saturating_sub(self.employed())
    }
}

/// Best-ever cost after the initial population and after every
/// generation/iteration.
pub type Trace = Vec<f64>;

type Perm = Vec<(NodeId, f64)>;

struct Evaluator<'a> {
    instance: &'a ProblemInstance,
    evaluations: usize,
}

impl Evaluator<'_> {
    fn eval(&mut self, perm: &Perm) -> Result<f64> {
        self.evaluations += 1;
        let mut att = Attacher::new(&self.instance.graph, self.instance.source);
        for &(u, x) in perm {
            att.attach(u, x)?;
        }
        Ok(att.cost())
    }
}

fn random_perm(base: &Perm, rng: &mut ChaCha8Rng) -> Perm {
    let mut p = base.clone();
    p.shuffle(rng);
    p
}

fn finish(instance: &ProblemInstance, best: &Perm, tag: &str, started: Instant) -> Result<Solution> {
    let (tree, _) = attach_in_order(instance, best)?;
    Solution::from_tree(instance, tree, tag, started)
}

pub fn genetic_algorithm(instance: &ProblemInstance, config: &GaConfig) -> Result<Solution> {
    genetic_algorithm_traced(instance, config).map(|(s, _)| s)
}

/// Permutation GA: order crossover, swap mutation, tournament selection and
/// elitism of one. Fitness is the sequential attachment cost in chromosome
/// order.
pub fn genetic_algorithm_traced(instance: &ProblemInstance, config: &GaConfig) -> Result<(Solution, Trace)> {
    let started = Instant::now();
    config.validate()?;
    instance.check_reachable()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base: Perm = instance.demands.entries().to_vec();
    let mut ev = Evaluator { instance, evaluations: 0 };

    let mut pop: Vec<Perm> = (0..config.population).map(|_| random_perm(&base, &mut rng)).collect();
    let mut fit: Vec<f64> = pop.iter().map(|p| ev.eval(p)).collect::<Result<_>>()?;
    let mut best = argmin(&fit);
    let (mut best_perm, mut best_cost) = (pop[best].clone(), fit[best]);
    let mut trace = vec![best_cost];

    for _ in 0..config.generations {
        let mut next = vec![pop[best].clone()];
        while next.len() < config.population {
            let a = tournament(&fit, config.tournament_size, &mut rng);
            let b = tournament(&fit, config.tournament_size, &mut rng);
            let mut child = if rng.gen_bool(config.crossover_rate) {
                order_crossover(&pop[a], &pop[b], &mut rng)
            } else {
                pop[a].clone()
            };
            if child.len() > 1 && rng.gen_bool(config.mutation_rate) {
                let i = rng.gen_range(0..child.len());
                let j = rng.gen_range(0..child.len());
                child.swap(i, j);
            }
            next.push(child);
        }
        pop = next;
        fit = pop.iter().map(|p| ev.eval(p)).collect::<Result<_>>()?;
        best = argmin(&fit);
        if fit[best] < best_cost {
            best_cost = fit[best];
            best_perm = pop[best].clone();
        }
        trace.push(best_cost);
    }
    Ok((finish(instance, &best_perm, "ga", started)?, trace))
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

fn tournament(fit: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.gen_range(0..fit.len());
    for _ in 1..size {
        let c = rng.gen_range(0..fit.len());
        if fit[c] < fit[best] {
            best = c;
        }
    }
    best
}

/// OX: copy a random slice from `a`, fill the rest in `b`'s order.
fn order_crossover(a: &Perm, b: &Perm, rng: &mut ChaCha8Rng) -> Perm {
    let n = a.len();
    if n < 2 {
        return a.clone();
    }
    let (mut i, mut j) = (rng.gen_range(0..n), rng.gen_range(0..n));
    if i > j {
        std::mem::swap(&mut i, &mut j);
    }
    let kept: Vec<NodeId> = a[i..=j].iter().map(|e| e.0).collect();
    let mut fill = b.iter().filter(|e| !kept.contains(&e.0));
    let mut child = Vec::with_capacity(n);
    for (k, item) in a.iter().enumerate() {
        if (i..=j).contains(&k) {
            child.push(*item);
        } else {
            child.push(*fill.next().expect("b is a permutation of a"));
        }
    }
    child
}

fn neighbour(p: &Perm, rng: &mut ChaCha8Rng) -> Perm {
    let mut q = p.clone();
    let n = q.len();
    if n < 2 {
        return q;
    }
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    if rng.gen_bool(0.5) {
        q.swap(i, j);
    } else {
        let item = q.remove(i);
        q.insert(j, item);
    }
    q
}

fn try_improve(
    ev: &mut Evaluator<'_>,
    i: usize,
    sources: &mut [Perm],
    cost: &mut [f64],
    trials: &mut [usize],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let cand = neighbour(&sources[i], rng);
    let c = ev.eval(&cand)?;
    if c < cost[i] {
        sources[i] = cand;
        cost[i] = c;
        trials[i] = 0;
    } else {
        trials[i] += 1;
    }
    Ok(())
}

pub fn bee_colony(instance: &ProblemInstance, config: &BcoConfig) -> Result<Solution> {
    bee_colony_traced(instance, config).map(|(s, _)| s)
}

/// Artificial bee colony over destination orders with the same fitness as
/// the GA. Employed bees try one swap/insertion neighbour of their source,
/// onlookers pick sources with probability proportional to 1/cost, and a
/// source that fails to improve `scout_limit` times is replaced at random.
pub fn bee_colony_traced(instance: &ProblemInstance, config: &BcoConfig) -> Result<(Solution, Trace)> {
    let started = Instant::now();
    config.validate()?;
    instance.check_reachable()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base: Perm = instance.demands.entries().to_vec();
    let mut ev = Evaluator { instance, evaluations: 0 };

    let m = config.employed();
    let mut sources: Vec<Perm> = (0..m).map(|_| random_perm(&base, &mut rng)).collect();
    let mut cost: Vec<f64> = sources.iter().map(|p| ev.eval(p)).collect::<Result<_>>()?;
    let mut trials = vec![0usize; m];
    let b = argmin(&cost);
    let (mut best_perm, mut best_cost) = (sources[b].clone(), cost[b]);
    let mut trace = vec![best_cost];

    for _ in 0..config.iterations {
        for i in 0..m {
            try_improve(&mut ev, i, &mut sources, &mut cost, &mut trials, &mut rng)?;
        }
        let weights: Vec<f64> = cost.iter().map(|&c| 1.0 / c.max(1e-12)).collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for _ in 0..config.onlookers() {
            let i = pick.sample(&mut rng);
            try_improve(&mut ev, i, &mut sources, &mut cost, &mut trials, &mut rng)?;
        }
        for i in 0..m {
            if cost[i] < best_cost {
                best_cost = cost[i];
                best_perm = sources[i].clone();
            }
        }
        for i in 0..m {
            if trials[i] >= config.scout_limit {
                sources[i] = random_perm(&base, &mut rng);
                cost[i] = ev.eval(&sources[i])?;
                trials[i] = 0;
                if cost[i] < best_cost {
                    best_cost = cost[i];
                    best_perm = sources[i].clone();
                }
            }
        }
        trace.push(best_cost);
    }
    Ok((finish(instance, &best_perm, "bco", started)?, trace))
}
