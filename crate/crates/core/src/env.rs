//! Sequential multicast construction as an episodic decision process.
//!
//! Users are routed one at a time in descending demand order. Each episode
//! grows a path from the active user; stepping onto a node already connected
//! to the source (the inflow set) merges the path into the tree and moves on
//! to the next user.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::instance::ProblemInstance;
use crate::paths::dijkstra;
use crate::tree::MulticastTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub gamma: f64,
    /// Steps allowed per episode before the hub fallback is forced;
    /// `None` means twice the node count.
    pub max_steps: Option<usize>,
    pub use_virtual_hub: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            gamma: 0.99,
            max_steps: None,
            use_virtual_hub: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub episode_done: bool,
    pub all_done: bool,
}

/// Environment state: the tree built so far, the inflow set, the active
/// user's partial path and the remaining queue.
#[derive(Debug, Clone)]
pub struct RoutingEnv {
    instance: ProblemInstance,
    config: EnvConfig,
    max_steps: usize,
    tree: MulticastTree,
    in_inflow: Vec<bool>,
    queue: Vec<(NodeId, f64)>,
    cursor: usize,
    path: Vec<NodeId>,
    on_path: Vec<bool>,
    episode_steps: usize,
}

impl RoutingEnv {
    /// Starts from the source alone. Attaches the hub first when configured.
    pub fn reset(instance: &ProblemInstance, config: &EnvConfig) -> Result<Self> {
        if instance.demands.is_empty() {
            return Err(Error::Env("instance has no destinations".into()));
        }
        let instance = Self::prepare(instance, config)?;
        let tree = MulticastTree::new(instance.source);
        let queue = instance.demands.descending_order();
        Self::start(instance, config, tree, queue)
    }

    /// Starts from an existing tree (all its nodes form the inflow set) and
    /// routes only `new_users`. `instance` must list every destination,
    /// old and new.
    pub fn reset_with_tree(
        instance: &ProblemInstance,
        config: &EnvConfig,
        tree: &MulticastTree,
        new_users: &[(NodeId, f64)],
    ) -> Result<Self> {
        if tree.root() != instance.source {
            return Err(Error::Env("tree root differs from the instance source".into()));
        }
        let instance = Self::prepare(instance, config)?;
        for (c, p) in tree.edges() {
            if !instance.graph.has_edge(c, p) {
                return Err(Error::MissingEdge(c, p));
            }
        }
        let mut queue = new_users.to_vec();
        queue.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self::start(instance, config, tree.clone(), queue)
    }

    fn prepare(instance: &ProblemInstance, config: &EnvConfig) -> Result<ProblemInstance> {
        config.validate()?;
        if config.use_virtual_hub {
            Ok(instance.ensure_hub())
        } else {
            Ok(instance.clone())
        }
    }

    fn start(
        instance: ProblemInstance,
        config: &EnvConfig,
        tree: MulticastTree,
        queue: Vec<(NodeId, f64)>,
    ) -> Result<Self> {
        let n = instance.graph.node_count();
        let mut in_inflow = vec![false; n];
        for v in tree.nodes() {
            in_inflow[v] = true;
        }
        let mut env = RoutingEnv {
            max_steps: config.max_steps.unwrap_or(2 * n),
            config: config.clone(),
            instance,
            tree,
            in_inflow,
            queue,
            cursor: 0,
            path: Vec::new(),
            on_path: vec![false; n],
            episode_steps: 0,
        };
        env.begin_episode();
        Ok(env)
    }

    /// Activates the next user not already connected.
    fn begin_episode(&mut self) {
        for &v in &self.path {
            self.on_path[v] = false;
        }
        self.path.clear();
        self.episode_steps = 0;
        while self.cursor < self.queue.len() && self.in_inflow[self.queue[self.cursor].0] {
            self.cursor += 1;
        }
        if let Some(&(u, _)) = self.queue.get(self.cursor) {
            self.path.push(u);
            self.on_path[u] = true;
        }
    }

    /// The instance the environment routes on (with the hub, if enabled).
    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn tree(&self) -> &MulticastTree {
        &self.tree
    }

    pub fn into_tree(self) -> MulticastTree {
        self.tree
    }

    pub fn in_inflow(&self) -> &[bool] {
        &self.in_inflow
    }

    pub fn inflow_set(&self) -> Vec<NodeId> {
        (0..self.in_inflow.len()).filter(|&v| self.in_inflow[v]).collect()
    }

    pub fn partial_path(&self) -> &[NodeId] {
        &self.path
    }

    pub fn current_node(&self) -> Option<NodeId> {
        self.path.last().copied()
    }

    /// Users in routing order.
    pub fn queue(&self) -> &[(NodeId, f64)] {
        &self.queue
    }

    pub fn active_user(&self) -> Option<(NodeId, f64)> {
        self.queue.get(self.cursor).copied()
    }

    /// Zero-based position of the active user in the routing order.
    pub fn user_rank(&self) -> usize {
        self.cursor
    }

    pub fn episode_steps(&self) -> usize {
        self.episode_steps
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.queue.len()
    }

    /// Neighbours of the current node that are not on the partial path.
    /// The hub is an escape node: from it only inflow nodes are offered.
    pub fn valid_actions(&self) -> Vec<NodeId> {
        let Some(u) = self.current_node() else {
            return Vec::new();
        };
        let from_hub = self.instance.graph.is_hub(u);
        self.instance
            .graph
            .neighbors(u)
            .iter()
            .map(|&(v, _)| v)
            .filter(|&v| !self.on_path[v] && (!from_hub || self.in_inflow[v]))
            .collect()
    }

    /// Action the environment takes on the policy's behalf when the step
    /// budget is spent or no action is left: the hub, then the source.
    /// Without a hub, the first hop of the cheapest path to the inflow set
    /// avoiding the partial path.
    pub fn fallback_action(&self) -> Result<NodeId> {
        let u = self.current_node().ok_or_else(|| Error::Env("no active episode".into()))?;
        let graph = &self.instance.graph;
        if let Some(h) = graph.hub() {
            if u == h {
                return Ok(self.instance.source);
            }
            if !self.on_path[h] {
                return Ok(h);
            }
        }
        let sources: Vec<(NodeId, f64)> = self.inflow_set().into_iter().map(|v| (v, 0.0)).collect();
        let on_path = &self.on_path;
        let sp = dijkstra(graph, &sources, |_, _, c| c, |v| on_path[v] && v != u);
        match sp.path_to_source(u) {
            Some(p) if p.len() >= 2 => Ok(p[1]),
            _ => Err(Error::DeadEnd(u)),
        }
    }

    /// True when the next action must come from [`Self::fallback_action`].
    pub fn needs_fallback(&self) -> bool {
        self.episode_steps >= self.max_steps || self.valid_actions().is_empty()
    }

    pub fn step(&mut self, action: NodeId) -> Result<StepOutcome> {
        let (_, x) = self.active_user().ok_or_else(|| Error::Env("all users are routed".into()))?;
        let u = self.current_node().expect("active episode has a path");
        let legal = self.valid_actions().contains(&action)
            || (self.needs_fallback() && self.fallback_action().ok() == Some(action));
        if !legal {
            return Err(Error::InvalidAction { at: u, action });
        }
        let cost = self
            .instance
            .graph
            .cost(u, action)
            .ok_or(Error::MissingEdge(u, action))?;
        let reward = -x * cost;
        self.episode_steps += 1;
        if self.in_inflow[action] {
            let mut full = self.path.clone();
            full.push(action);
            self.tree.merge_path_in_place(&full)?;
            for &v in &self.path {
                self.in_inflow[v] = true;
            }
            self.cursor += 1;
            self.begin_episode();
            Ok(StepOutcome {
                reward,
                episode_done: true,
                all_done: self.is_done(),
            })
        } else {
            self.path.push(action);
            self.on_path[action] = true;
            Ok(StepOutcome {
                reward,
                episode_done: false,
                all_done: false,
            })
        }
    }
}

/// What a policy sees at one decision.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub instance: &'a ProblemInstance,
    pub in_inflow: &'a [bool],
    pub path: &'a [NodeId],
    pub user: NodeId,
    pub demand: f64,
    pub user_rank: usize,
    pub actions: &'a [NodeId],
}

impl<'a> DecisionContext<'a> {
    pub fn of(env: &'a RoutingEnv, actions: &'a [NodeId]) -> Self {
        let (user, demand) = env.active_user().expect("active episode");
        DecisionContext {
            instance: env.instance(),
            in_inflow: env.in_inflow(),
            path: env.partial_path(),
            user,
            demand,
            user_rank: env.user_rank(),
            actions,
        }
    }

    pub fn current(&self) -> NodeId {
        *self.path.last().expect("path is non-empty")
    }
}

/// Returns a probability for each entry of `ctx.actions`.
pub trait Policy {
    fn action_probs(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>>;
}

/// Picks uniformly among valid actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn action_probs(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        let k = ctx.actions.len() as f64;
        Ok(vec![1.0 / k; ctx.actions.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub user: NodeId,
    pub from: NodeId,
    pub action: NodeId,
    pub reward: f64,
    /// Size of the valid action set.
    pub n_valid: usize,
    /// Log-probability of the chosen action; absent for forced steps.
    pub logp: Option<f64>,
    pub forced: bool,
}

/// Finished rollout: the merged tree and one step list per routed user.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub instance: ProblemInstance,
    pub tree: MulticastTree,
    pub episodes: Vec<Vec<StepRecord>>,
}

impl Rollout {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.episodes.iter().flatten()
    }

    /// Undiscounted sum of rewards over all episodes.
    pub fn total_reward(&self) -> f64 {
        self.steps().map(|s| s.reward).sum()
    }

    /// Discounted return-to-go for every step, episode by episode.
    pub fn returns_to_go(&self, gamma: f64) -> Vec<Vec<f64>> {
        self.episodes
            .iter()
            .map(|ep| {
                let mut g = 0.0;
                let mut out = vec![0.0; ep.len()];
                for (i, s) in ep.iter().enumerate().rev() {
                    g = s.reward + gamma * g;
                    out[i] = g;
                }
                out
            })
            .collect()
    }

    /// JSON trajectory dump: one object per step.
    pub fn dump_json(&self) -> String {
        let steps: Vec<&StepRecord> = self.steps().collect();
        serde_json::to_string_pretty(&steps).expect("trajectory serialization cannot fail")
    }
}

/// Runs every episode to completion with `policy`.
pub fn rollout(
    policy: &mut dyn Policy,
    instance: &ProblemInstance,
    config: &EnvConfig,
    mode: Mode,
    seed: u64,
) -> Result<Rollout> {
    let env = RoutingEnv::reset(instance, config)?;
    run(policy, env, mode, seed)
}

/// Continues routing from an environment that has already been reset.
pub fn run(policy: &mut dyn Policy, mut env: RoutingEnv, mode: Mode, seed: u64) -> Result<Rollout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::new();
    let mut current = Vec::new();
    while !env.is_done() {
        let (user, _) = env.active_user().expect("not done");
        let from = env.current_node().expect("not done");
        let actions = env.valid_actions();
        let (action, logp, forced) = if env.needs_fallback() {
            (env.fallback_action()?, None, true)
        } else {
            let probs = policy.action_probs(&DecisionContext::of(&env, &actions))?;
            if probs.len() != actions.len() {
                return Err(Error::Policy(format!(
                    "policy returned {} probabilities for {} actions",
                    probs.len(),
                    actions.len()
                )));
            }
            let i = match mode {
                Mode::Greedy => argmax(&probs),
                Mode::Sample => sample_index(&probs, &mut rng),
            };
            (actions[i], Some(probs[i].ln()), false)
        };
        let out = env.step(action)?;
        current.push(StepRecord {
            user,
            from,
            action,
            reward: out.reward,
            n_valid: actions.len(),
            logp,
            forced,
        });
        if out.episode_done {
            episodes.push(std::mem::take(&mut current));
        }
    }
    Ok(Rollout {
        instance: env.instance().clone(),
        tree: env.into_tree(),
        episodes,
    })
}

/// Index of the largest entry; ties go to the first.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Draws an index with probability proportional to `p`.
pub fn sample_index(p: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = p.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, &v) in p.iter().enumerate() {
        r -= v;
        if r < 0.0 {
            return i;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NetworkGraph, HUB_COST};
    use crate::instance::DemandVector;
    use crate::tree::{tree_cost, validate};

    fn instance(n: usize, edges: &[(usize, usize, f64)], demands: &[(usize, f64)]) -> ProblemInstance {
        let g = NetworkGraph::from_edges(n, edges.iter().copied()).unwrap();
        ProblemInstance::new(g, 0, DemandVector::new(demands.to_vec()).unwrap(), 0).unwrap()
    }

    fn line() -> ProblemInstance {
        // 0 - 1 - 2 - 3, plus 1 - 4
        instance(5, &[(0, 1, 0.4), (1, 2, 0.5), (2, 3, 0.2), (1, 4, 0.3)], &[(3, 0.5), (4, 1.0)])
    }

    #[test]
    fn queue_is_demand_descending() {
        let x = instance(
            8,
            &(1..8).map(|v| (0, v, 1.0)).collect::<Vec<_>>(),
            &[(5, 0.25), (3, 1.0), (7, 0.5)],
        );
        let env = RoutingEnv::reset(&x, &EnvConfig::default()).unwrap();
        let order: Vec<_> = env.queue().iter().map(|e| e.0).collect();
        assert_eq!(order, vec![3, 7, 5]);
        assert_eq!(env.inflow_set(), vec![0]);
        assert_eq!(env.partial_path(), &[3]);
    }

    #[test]
    fn mask_excludes_path_and_offers_hub() {
        let x = line();
        let cfg = EnvConfig::default();
        let mut env = RoutingEnv::reset(&x, &cfg).unwrap();
        let hub = env.instance().graph.hub().unwrap();
        assert_eq!(env.partial_path(), &[4]);
        assert_eq!(env.valid_actions(), vec![1, hub]);
        env.step(1).unwrap();
        assert_eq!(env.valid_actions(), vec![0, 2, hub]);
        let out = env.step(0).unwrap();
        assert!(out.episode_done && !out.all_done);
        assert!((out.reward + 0.4).abs() < 1e-12);
        assert_eq!(env.partial_path(), &[3]);
    }

    #[test]
    fn hub_step_and_escape() {
        let x = line();
        let mut env = RoutingEnv::reset(&x, &EnvConfig::default()).unwrap();
        let hub = env.instance().graph.hub().unwrap();
        let out = env.step(hub).unwrap();
        assert_eq!(out.reward, -HUB_COST);
        assert_eq!(env.valid_actions(), vec![0]);
    }

    #[test]
    fn reward_arithmetic() {
        let x = instance(2, &[(0, 1, 0.4)], &[(1, 0.5)]);
        let mut env = RoutingEnv::reset(&x, &EnvConfig::default()).unwrap();
        let out = env.step(0).unwrap();
        assert!((out.reward + 0.2).abs() < 1e-15);
        assert!(out.all_done);
    }

    #[test]
    fn invalid_action_is_an_error() {
        let mut env = RoutingEnv::reset(&line(), &EnvConfig::default()).unwrap();
        assert!(matches!(env.step(3), Err(Error::InvalidAction { at: 4, action: 3 })));
    }

    #[test]
    fn dead_end_without_hub() {
        // 0 - 1, 2 - 3: user 3 can only walk to 2 and then is stuck.
        let x = instance(4, &[(0, 1, 1.0), (2, 3, 1.0)], &[(3, 1.0)]);
        let cfg = EnvConfig {
            use_virtual_hub: false,
            ..Default::default()
        };
        let err = rollout(&mut UniformPolicy, &x, &cfg, Mode::Sample, 1).unwrap_err();
        assert!(err.is_infeasible(), "{err}");
    }

    #[test]
    fn uniform_rollouts_terminate_and_validate() {
        let cfg = crate::generate::GenConfig::new(crate::generate::Topology::ErdosRenyi { p: 0.2 }, 12, 5, 2);
        let x = crate::generate::generate_instance(&cfg).unwrap();
        for seed in 0..50 {
            let r = rollout(&mut UniformPolicy, &x, &EnvConfig::default(), Mode::Sample, seed).unwrap();
            let report = validate(&r.instance.graph, &r.tree, 0, &r.instance.demands);
            assert!(report.is_valid(), "{:?}", report.violations);
            let cost = tree_cost(&r.instance.graph, &r.tree, &r.instance.demands).unwrap();
            assert!(-r.total_reward() >= cost - 1e-9);
            let max = 2 * r.instance.graph.node_count() + 2;
            assert!(r.episodes.iter().all(|e| e.len() <= max));
        }
    }

    #[test]
    fn step_budget_forces_hub_then_source() {
        let x = line();
        let cfg = EnvConfig {
            max_steps: Some(1),
            ..Default::default()
        };
        let r = rollout(&mut UniformPolicy, &x, &cfg, Mode::Greedy, 0).unwrap();
        let hub = r.instance.graph.hub().unwrap();
        for ep in &r.episodes {
            let forced: Vec<_> = ep.iter().filter(|s| s.forced).collect();
            assert!(forced.iter().all(|s| s.logp.is_none()));
            if let Some(first) = forced.first() {
                assert_eq!(first.action, hub);
            }
        }
    }

    #[test]
    fn returns_to_go_are_discounted() {
        let x = line();
        let r = rollout(&mut UniformPolicy, &x, &EnvConfig::default(), Mode::Greedy, 0).unwrap();
        let g = r.returns_to_go(0.5);
        for (ep, gs) in r.episodes.iter().zip(&g) {
            let last = ep.len() - 1;
            assert_eq!(gs[last], ep[last].reward);
            for i in 0..last {
                assert!((gs[i] - (ep[i].reward + 0.5 * gs[i + 1])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn warm_start_keeps_tree() {
        let x = line();
        let base = MulticastTree::from_edges(0, [(1, 0), (4, 1)]).unwrap();
        let env = RoutingEnv::reset_with_tree(&x, &EnvConfig::default(), &base, &[(3, 0.5)]).unwrap();
        assert_eq!(env.inflow_set(), vec![0, 1, 4]);
        let r = run(&mut UniformPolicy, env, Mode::Greedy, 0).unwrap();
        for (c, p) in base.edges() {
            assert_eq!(r.tree.parent(c), Some(p));
        }
        assert!(r.tree.contains(3));
    }

    #[test]
    fn trajectory_dump_lists_steps() {
        let r = rollout(&mut UniformPolicy, &line(), &EnvConfig::default(), Mode::Greedy, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.dump_json()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), r.steps().count());
        assert!(v[0].get("n_valid").is_some());
    }
}
