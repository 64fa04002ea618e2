//! Per-node input features describing the routing state.

use mcroute_core::paths::dijkstra;
use mcroute_core::{DecisionContext, HUB_COST};
use ndarray::Array2;

use crate::autodiff::Float;

/// Number of features per node.
pub const FEATURE_DIM: usize = 15;

/// Column layout of the feature matrix. Every value lies in `[0, 1]`.
pub struct FeatureSpec;

impl FeatureSpec {
    pub const IS_SOURCE: usize = 0;
    pub const IS_DESTINATION: usize = 1;
    /// Own demand divided by the instance's largest demand.
    pub const OWN_DEMAND: usize = 2;
    pub const IN_INFLOW: usize = 3;
    pub const ON_PATH: usize = 4;
    pub const IS_CURRENT: usize = 5;
    pub const IS_ACTIVE_USER: usize = 6;
    /// Active user's demand, same on every row.
    pub const ACTIVE_DEMAND: usize = 7;
    /// Active user's rank divided by `max_user`, capped at 1.
    pub const USER_INDEX: usize = 8;
    /// Degree without the hub edge over the largest such degree.
    pub const DEGREE: usize = 9;
    pub const IS_HUB: usize = 10;
    /// Cost of the edge from the current node over the largest non-hub
    /// edge cost; 1 for the hub edge, 0 when not adjacent.
    pub const EDGE_COST: usize = 11;
    /// Cheapest non-hub distance `d` to the inflow set as `d / (1 + d)`;
    /// 1 when unreachable without the hub.
    pub const INFLOW_DISTANCE: usize = 12;
    /// For each candidate action `v`: `s = e(u, v) + dist(v)` with hub legs
    /// at the hub cost, as `s / (1 + s)`; 1 for non-candidates.
    pub const VIA_COST: usize = 13;
    /// Cheapest candidate `s` over this candidate's `s`; 0 for non-candidates.
    pub const VIA_BEST: usize = 14;

    pub const NAMES: [&'static str; FEATURE_DIM] = [
        "is_source",
        "is_destination",
        "own_demand",
        "in_inflow",
        "on_path",
        "is_current",
        "is_active_user",
        "active_demand",
        "user_index",
        "degree",
        "is_hub",
        "edge_cost",
        "inflow_distance",
        "via_cost",
        "via_best",
    ];
}

pub fn node_features<T: Float>(ctx: &DecisionContext<'_>, max_user: usize) -> Array2<T> {
    let inst = ctx.instance;
    let graph = &inst.graph;
    let n = graph.node_count();
    let mut x = Array2::<f64>::zeros((n, FEATURE_DIM));
    let max_demand = inst.demands.max_demand().max(f64::MIN_POSITIVE);
    let max_degree = (0..n).map(|v| graph.regular_degree(v)).max().unwrap_or(0).max(1) as f64;
    let max_cost = graph.max_regular_cost();
    let current = ctx.current();

    x[[inst.source, FeatureSpec::IS_SOURCE]] = 1.0;
    for &(d, lvl) in inst.demands.entries() {
        x[[d, FeatureSpec::IS_DESTINATION]] = 1.0;
        x[[d, FeatureSpec::OWN_DEMAND]] = lvl / max_demand;
    }
    for &v in ctx.path {
        x[[v, FeatureSpec::ON_PATH]] = 1.0;
    }
    x[[current, FeatureSpec::IS_CURRENT]] = 1.0;
    x[[ctx.user, FeatureSpec::IS_ACTIVE_USER]] = 1.0;
    let active = ctx.demand / max_demand;
    let rank = (ctx.user_rank as f64 / max_user as f64).min(1.0);
    for v in 0..n {
        x[[v, FeatureSpec::IN_INFLOW]] = f64::from(u8::from(ctx.in_inflow[v]));
        x[[v, FeatureSpec::ACTIVE_DEMAND]] = active;
        x[[v, FeatureSpec::USER_INDEX]] = rank;
        x[[v, FeatureSpec::DEGREE]] = (graph.regular_degree(v) as f64 / max_degree).min(1.0);
    }
    if let Some(h) = graph.hub() {
        x[[h, FeatureSpec::IS_HUB]] = 1.0;
        x[[h, FeatureSpec::DEGREE]] = 1.0;
    }
    for &(v, c) in graph.neighbors(current) {
        x[[v, FeatureSpec::EDGE_COST]] = if graph.is_hub(v) || graph.is_hub(current) {
            1.0
        } else {
            (c / max_cost).min(1.0)
        };
    }

    let sources: Vec<(usize, f64)> = (0..n)
        .filter(|&v| ctx.in_inflow[v] && !graph.is_hub(v))
        .map(|v| (v, 0.0))
        .collect();
    let sp = dijkstra(graph, &sources, |_, _, c| c, |v| graph.is_hub(v));
    for v in 0..n {
        let d = sp.dist[v];
        x[[v, FeatureSpec::INFLOW_DISTANCE]] = if d.is_finite() { d / (1.0 + d) } else { 1.0 };
        x[[v, FeatureSpec::VIA_COST]] = 1.0;
    }

    let remaining = |v: usize| {
        if graph.is_hub(v) || ctx.in_inflow[v] {
            if ctx.in_inflow[v] { 0.0 } else { HUB_COST }
        } else if sp.dist[v].is_finite() {
            sp.dist[v]
        } else {
            2.0 * HUB_COST
        }
    };
    let via: Vec<(usize, f64)> = graph
        .neighbors(current)
        .iter()
        .filter(|(v, _)| ctx.actions.contains(v))
        .map(|&(v, c)| {
            let leg = if graph.is_hub(v) || graph.is_hub(current) { HUB_COST } else { c };
            (v, leg + remaining(v))
        })
        .collect();
    let best = via.iter().map(|&(_, s)| s).fold(f64::INFINITY, f64::min);
    for &(v, s) in &via {
        x[[v, FeatureSpec::VIA_COST]] = s / (1.0 + s);
        x[[v, FeatureSpec::VIA_BEST]] = if s > 0.0 { best / s } else { 1.0 };
    }
    x.mapv(T::of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcroute_core::{DemandVector, EnvConfig, NetworkGraph, ProblemInstance, RoutingEnv};

    #[test]
    fn features_describe_the_state() {
        let g = NetworkGraph::from_edges(4, [(0, 1, 0.5), (1, 2, 1.0), (2, 3, 0.25)]).unwrap();
        let x = ProblemInstance::new(g, 0, DemandVector::new(vec![(3, 0.5), (2, 1.0)]).unwrap(), 0).unwrap();
        let mut env = RoutingEnv::reset(&x, &EnvConfig::default()).unwrap();
        env.step(1).unwrap();
        let actions = env.valid_actions();
        let ctx = DecisionContext::of(&env, &actions);
        let f: Array2<f64> = node_features(&ctx, 20);
        assert_eq!(f.shape(), &[5, FEATURE_DIM]);
        assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(f[[2, FeatureSpec::IS_ACTIVE_USER]], 1.0);
        assert_eq!(f[[1, FeatureSpec::IS_CURRENT]], 1.0);
        assert_eq!(f[[2, FeatureSpec::ON_PATH]], 1.0);
        assert_eq!(f[[3, FeatureSpec::OWN_DEMAND]], 0.5);
        assert_eq!(f[[4, FeatureSpec::IS_HUB]], 1.0);
        assert_eq!(f[[0, FeatureSpec::EDGE_COST]], 0.5);
        assert_eq!(f[[4, FeatureSpec::EDGE_COST]], 1.0);
        assert_eq!(f[[3, FeatureSpec::EDGE_COST]], 0.0);
        assert_eq!(f[[0, FeatureSpec::INFLOW_DISTANCE]], 0.0);
        assert!((f[[1, FeatureSpec::INFLOW_DISTANCE]] - 0.5 / 1.5).abs() < 1e-12);
        assert_eq!(f[[4, FeatureSpec::INFLOW_DISTANCE]], 1.0);
        // From node 1 the candidates are 0 (the source) and the hub.
        assert_eq!(f[[0, FeatureSpec::VIA_COST]], 0.5 / 1.5);
        assert_eq!(f[[0, FeatureSpec::VIA_BEST]], 1.0);
        assert_eq!(f[[4, FeatureSpec::VIA_COST]], 20.0 / 21.0);
        assert_eq!(f[[4, FeatureSpec::VIA_BEST]], 0.5 / 20.0);
        assert_eq!(f[[2, FeatureSpec::VIA_COST]], 1.0);
        assert_eq!(f[[3, FeatureSpec::VIA_BEST]], 0.0);
    }
}
