//! Users joining an existing tree: warm attachment versus full re-solve.

use mcroute_core::{
    env::run, generate_instance, sequential_greedy, tree_cost, Attacher, DemandVector, GenConfig, Mode, MulticastTree,
    NodeId, ProblemInstance, RoutingEnv, Topology,
};
use mcroute_gpn::train::derive_seed;
use mcroute_gpn::GpnPolicy;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BenchError, Result};
use crate::solvers::{timed, Algo, SolverContext};
use crate::suite::{solve_all, ResultRow};

#[derive(Debug, Clone)]
pub struct IncrementalConfig {
    pub nodes: usize,
    pub degree: usize,
    pub base_users: usize,
    pub max_added: usize,
    pub instances: usize,
    /// Solvers run from scratch on the enlarged instance.
    pub cold: Vec<Algo>,
    pub seed: u64,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        IncrementalConfig {
            nodes: 50,
            degree: 4,
            base_users: 9,
            max_added: 3,
            instances: 100,
            cold: vec![Algo::Dp, Algo::Dijkstra, Algo::Ga, Algo::Bco],
            seed: 0,
        }
    }
}

/// One scenario: the base instance and the users that arrive later.
#[derive(Debug, Clone)]
pub struct Arrival {
    pub seed: u64,
    pub base: ProblemInstance,
    pub extra: Vec<(NodeId, f64)>,
}

impl Arrival {
    /// The base users plus the first `k` arrivals.
    pub fn with_added(&self, k: usize) -> Result<ProblemInstance> {
        let mut entries = self.base.demands.entries().to_vec();
        entries.extend_from_slice(&self.extra[..k]);
        Ok(self.base.with_demands(DemandVector::new(entries)?)?)
    }
}

pub fn arrival(cfg: &IncrementalConfig, index: usize) -> Result<Arrival> {
    let seed = derive_seed(&[cfg.seed, 0x1AC, index as u64]);
    let total = cfg.base_users + cfg.max_added;
    let full = generate_instance(&GenConfig::new(Topology::RandomRegular { degree: cfg.degree }, cfg.nodes, total, seed).connected())?;
    let mut entries = full.demands.entries().to_vec();
    entries.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let extra = entries.split_off(cfg.base_users);
    Ok(Arrival {
        seed,
        base: full.with_demands(DemandVector::new(entries)?)?,
        extra,
    })
}

/// True when every edge of `base` is still in `grown` with the same parent.
pub fn preserves(base: &MulticastTree, grown: &MulticastTree) -> bool {
    base.edges().into_iter().all(|(c, p)| grown.parent(c) == Some(p))
}

/// Routes `new_users` onto `tree` with the network, greedy decoding.
pub fn warm_gpn(
    ctx: &SolverContext,
    instance: &ProblemInstance,
    tree: &MulticastTree,
    new_users: &[(NodeId, f64)],
) -> Result<(MulticastTree, f64)> {
    let model = ctx
        .model
        .as_ref()
        .ok_or_else(|| BenchError::Input("warm gpn needs a checkpoint".into()))?;
    let env = RoutingEnv::reset_with_tree(instance, &ctx.env, tree, new_users)?;
    let roll = run(&mut GpnPolicy::new(model), env, Mode::Greedy, 0)?;
    let cost = tree_cost(&roll.instance.graph, &roll.tree, &roll.instance.demands)?;
    Ok((roll.tree, cost))
}

/// Attaches `new_users` to `tree` by cheapest upgrade-aware paths.
pub fn warm_greedy(
    instance: &ProblemInstance,
    tree: &MulticastTree,
    base_demands: &DemandVector,
    new_users: &[(NodeId, f64)],
) -> Result<(MulticastTree, f64)> {
    let mut a = Attacher::from_tree(&instance.graph, tree, base_demands)?;
    let mut order = new_users.to_vec();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    for (u, x) in order {
        a.attach(u, x)?;
    }
    let t = a.tree();
    let cost = tree_cost(&instance.graph, &t, &instance.demands)?;
    Ok((t, cost))
}

/// Rows for every instance and every number of added users.
pub fn incremental_run(cfg: &IncrementalConfig, ctx: &SolverContext) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for i in 0..cfg.instances {
        let arr = arrival(cfg, i)?;
        let greedy_base = sequential_greedy(&arr.base)?.tree;
        let gpn_base = match &ctx.model {
            Some(_) => Some(ctx.solve(Algo::Gpn, &arr.base, arr.seed)?.tree),
            None => None,
        };
        for k in 1..=cfg.max_added {
            let inst = arr.with_added(k)?;
            let point = format!("+{k}");
            let new = &arr.extra[..k];
            rows.extend(solve_all(ctx, &cfg.cold, "incremental", &point, i, &inst, arr.seed)?);

            let ((tree, cost), t) = timed(|| warm_greedy(&inst, &greedy_base, &arr.base.demands, new))?;
            if !preserves(&greedy_base, &tree) {
                return Err(BenchError::Invariant(format!("greedy-warm altered the base tree on instance {i}")));
            }
            rows.push(ResultRow::new("incremental", &point, i, arr.seed, "greedy-warm", cost, t));

            if let Some(base) = &gpn_base {
                let ((tree, cost), t) = timed(|| warm_gpn(ctx, &inst, base, new))?;
                if !preserves(base, &tree) {
                    return Err(BenchError::Invariant(format!("gpn-warm altered the base tree on instance {i}")));
                }
                rows.push(ResultRow::new("incremental", &point, i, arr.seed, "gpn-warm", cost, t));
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcroute_core::NetworkGraph;

    #[test]
    fn arrival_splits_users() {
        let cfg = IncrementalConfig {
            nodes: 20,
            ..Default::default()
        };
        let a = arrival(&cfg, 0).unwrap();
        assert_eq!(a.base.demands.len(), 9);
        assert_eq!(a.extra.len(), 3);
        let three = a.with_added(3).unwrap();
        assert_eq!(three.demands.len(), 12);
        let b = arrival(&cfg, 0).unwrap();
        assert_eq!(a.extra, b.extra);
    }

    #[test]
    fn adjacent_user_adds_one_edge() {
        // Tree 0-1-2 carries demand 1.0; node 3 hangs off 1 with cost 0.7.
        let g = NetworkGraph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (1, 3, 0.7), (0, 3, 5.0)]).unwrap();
        let base = ProblemInstance::new(g, 0, DemandVector::new(vec![(2, 1.0)]).unwrap(), 0).unwrap();
        let tree = MulticastTree::from_edges(0, [(1, 0), (2, 1)]).unwrap();
        let inst = base.with_demands(DemandVector::new(vec![(2, 1.0), (3, 0.5)]).unwrap()).unwrap();
        let (t, cost) = warm_greedy(&inst, &tree, &base.demands, &[(3, 0.5)]).unwrap();
        assert!(preserves(&tree, &t));
        assert!((cost - (2.0 + 0.35)).abs() < 1e-12);
    }

    #[test]
    fn preservation_check() {
        let a = MulticastTree::from_edges(0, [(1, 0), (2, 1)]).unwrap();
        let b = MulticastTree::from_edges(0, [(1, 0), (2, 1), (3, 2)]).unwrap();
        let c = MulticastTree::from_edges(0, [(2, 0), (1, 2)]).unwrap();
        assert!(preserves(&a, &b));
        assert!(!preserves(&a, &c));
    }
}
