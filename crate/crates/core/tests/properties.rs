use mcroute_core::tree::validate_with_flows;
use mcroute_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEVELS: [f64; 3] = [1.0, 0.5, 0.25];

/// Random connected-or-not small instance from a seed.
fn small_instance(seed: u64, n: usize, p: f64, k: usize) -> ProblemInstance {
    let mut cfg = GenConfig::new(Topology::ErdosRenyi { p }, n, k, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    cfg.demand_rule = DemandRule::Explicit((0..k).map(|_| LEVELS[rng.gen_range(0..3)]).collect());
    generate_instance(&cfg).unwrap()
}

/// A random spanning tree of 0..n with random costs, plus demands on a
/// random subset of non-root nodes.
fn random_tree(seed: u64, n: usize) -> (NetworkGraph, MulticastTree, DemandVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut parent = Vec::new();
    for v in 1..n {
        let p = rng.gen_range(0..v);
        // Costs on a 1/64 grid keep some exact ties between the two evaluations.
        edges.push((p, v, rng.gen_range(1..=64) as f64 / 64.0 + rng.gen::<f64>()));
        parent.push((v, p));
    }
    let graph = NetworkGraph::from_edges(n, edges).unwrap();
    let tree = MulticastTree::from_edges(0, parent).unwrap();
    let mut demands = Vec::new();
    for v in 1..n {
        if tree.children().get(&v).is_none() || rng.gen_bool(0.4) {
            demands.push((v, LEVELS[rng.gen_range(0..3)] * rng.gen_range(1..4) as f64));
        }
    }
    (graph, tree, DemandVector::new(demands).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lemma_flows_agree_with_level_decomposition(seed in any::<u64>(), n in 2usize..25) {
        let (g, t, d) = random_tree(seed, n);
        prop_assert_eq!(tree_cost(&g, &t, &d).unwrap(), level_decomposition_cost(&g, &t, &d).unwrap());
    }

    #[test]
    fn flows_satisfy_conservation_and_demands(seed in any::<u64>(), n in 2usize..25) {
        let (g, t, d) = random_tree(seed, n);
        let flows = compute_flows(&t, &d).unwrap();
        let report = validate_with_flows(&g, &t, 0, &d, &flows);
        prop_assert!(report.demands_satisfied);
        prop_assert!(report.conservation_holds);
        prop_assert!(flows.iter().all(|(_, f)| f > 0.0));
    }

    #[test]
    fn merging_paths_keeps_a_tree_and_never_lowers_cost(seed in any::<u64>()) {
        let x = small_instance(seed, 12, 0.35, 4);
        prop_assume!(x.check_reachable().is_ok());
        let sp = mcroute_core::paths::shortest_paths_from(&x.graph, 0);
        let mut tree = MulticastTree::new(0);
        let mut routed = Vec::new();
        let mut prev = 0.0;
        for &(u, lvl) in x.demands.entries() {
            if !tree.contains(u) {
                let full = sp.path_to_source(u).unwrap();
                let cut = full.iter().position(|&v| tree.contains(v)).unwrap();
                tree.merge_path_in_place(&full[..=cut]).unwrap();
            }
            routed.push((u, lvl));
            let d = DemandVector::new(routed.clone()).unwrap();
            let report = validate(&x.graph, &tree, 0, &d);
            prop_assert!(report.is_tree && report.is_rooted_connected);
            let c = tree_cost(&x.graph, &tree, &d).unwrap();
            prop_assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn instance_json_round_trip(seed in any::<u64>(), n in 2usize..20, hub in any::<bool>()) {
        let mut x = small_instance(seed, n, 0.3, (n - 1).min(3));
        if hub {
            x = x.attach_virtual_hub().unwrap();
        }
        prop_assert_eq!(ProblemInstance::from_json(&x.to_json()).unwrap(), x);
    }

    #[test]
    fn tree_json_round_trip(seed in any::<u64>(), n in 1usize..20) {
        let (_, t, _) = random_tree(seed, n.max(2));
        prop_assert_eq!(MulticastTree::from_json(&t.to_json()).unwrap(), t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_matches_brute_force(seed in any::<u64>(), n in 3usize..=8, k in 1usize..=3) {
        let k = k.min(n - 1);
        let x = small_instance(seed, n, 0.45, k);
        prop_assume!(x.graph.edge_count() <= 16 && x.check_reachable().is_ok());
        let dp = dreyfus_wagner(&x).unwrap();
        let bf = brute_force(&x).unwrap();
        prop_assert_eq!(dp.cost, bf.cost);
    }

    #[test]
    fn dp_is_a_lower_envelope(seed in any::<u64>()) {
        let x = small_instance(seed, 15, 0.3, 5);
        prop_assume!(x.check_reachable().is_ok());
        let dp = dreyfus_wagner(&x).unwrap();
        prop_assert!(validate(&x.graph, &dp.tree, 0, &x.demands).is_valid());
        let ga = GaConfig { generations: 10, population: 10, seed, ..Default::default() };
        let bco = BcoConfig { iterations: 10, seed, ..Default::default() };
        for s in [
            dijkstra_reuse(&x).unwrap(),
            sequential_greedy(&x).unwrap(),
            genetic_algorithm(&x, &ga).unwrap(),
            bee_colony(&x, &bco).unwrap(),
        ] {
            prop_assert!(s.cost >= dp.cost - 1e-9, "{} {} < {}", s.solver, s.cost, dp.cost);
            prop_assert!(validate(&x.graph, &s.tree, 0, &x.demands).is_valid());
        }
    }

    #[test]
    fn demand_scaling_is_covariant(seed in any::<u64>(), pow in -3i32..=3) {
        let x = small_instance(seed, 12, 0.3, 4);
        prop_assume!(x.check_reachable().is_ok());
        let lambda = 2f64.powi(pow);
        let scaled = x.with_demands(x.demands.scaled(lambda).unwrap()).unwrap();
        let a = dreyfus_wagner(&x).unwrap();
        let b = dreyfus_wagner(&scaled).unwrap();
        prop_assert_eq!(b.cost, a.cost * lambda);
        prop_assert_eq!(a.tree, b.tree);
    }

    #[test]
    fn seeded_heuristics_are_deterministic(seed in any::<u64>()) {
        let x = small_instance(seed, 14, 0.3, 5);
        prop_assume!(x.check_reachable().is_ok());
        let ga = GaConfig { generations: 5, population: 8, seed, ..Default::default() };
        let bco = BcoConfig { iterations: 5, seed, ..Default::default() };
        prop_assert_eq!(genetic_algorithm(&x, &ga).unwrap().tree, genetic_algorithm(&x, &ga).unwrap().tree);
        prop_assert_eq!(bee_colony(&x, &bco).unwrap().tree, bee_colony(&x, &bco).unwrap().tree);
    }

    #[test]
    fn uniform_rollouts_build_valid_trees(seed in any::<u64>()) {
        let x = small_instance(seed, 10, 0.25, 4);
        let r = rollout(&mut env::UniformPolicy, &x, &EnvConfig::default(), Mode::Sample, seed).unwrap();
        let report = validate(&r.instance.graph, &r.tree, 0, &r.instance.demands);
        prop_assert!(report.is_valid(), "{:?}", report.violations);
        let cost = tree_cost(&r.instance.graph, &r.tree, &r.instance.demands).unwrap();
        prop_assert!(-r.total_reward() >= cost - 1e-9);
        for ep in &r.episodes {
            let mut nodes: Vec<_> = ep.iter().map(|s| s.from).collect();
            nodes.sort_unstable();
            nodes.dedup();
            prop_assert_eq!(nodes.len(), ep.len());
        }
    }
}
