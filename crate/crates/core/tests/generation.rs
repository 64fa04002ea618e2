use mcroute_core::*;

#[test]
fn identical_configs_serialize_identically() {
    for seed in 0..20 {
        let cfg = GenConfig::new(Topology::RandomRegular { degree: 4 }, 30, 12, seed);
        assert_eq!(
            generate_instance(&cfg).unwrap().to_json(),
            generate_instance(&cfg).unwrap().to_json()
        );
    }
}

#[test]
fn regular_degree_over_many_seeds() {
    for seed in 0..100 {
        let cfg = GenConfig::new(Topology::RandomRegular { degree: 4 }, 30, 12, seed);
        let x = generate_instance(&cfg).unwrap();
        assert!((0..30).all(|v| x.graph.degree(v) == 4), "seed {seed}");
    }
}

#[test]
fn erdos_renyi_edge_count_expectation() {
    let trials = 10_000;
    let total: usize = (0..trials)
        .map(|seed| {
            let cfg = GenConfig::new(Topology::ErdosRenyi { p: 0.10 }, 30, 1, seed);
            generate_instance(&cfg).unwrap().graph.edge_count()
        })
        .sum();
    let mean = total as f64 / trials as f64;
    let expected = 0.10 * 435.0;
    assert!((mean - expected).abs() <= 0.05 * expected, "mean {mean}");
}

#[test]
fn demand_level_counts_follow_ceil_rule() {
    for k in 1..30 {
        let levels = assign_demands(k);
        let count = |l: f64| levels.iter().filter(|&&x| x == l).count();
        let third = k as f64 / 3.0;
        for l in [1.0, 0.5, 0.25] {
            assert!((count(l) as f64 - third).abs() <= 1.0, "k={k}");
        }
    }
}

#[test]
fn hub_attachment() {
    let cfg = GenConfig::new(Topology::ErdosRenyi { p: 0.3 }, 5, 2, 1);
    let x = generate_instance(&cfg).unwrap();
    let h = x.attach_virtual_hub().unwrap();
    assert_eq!(h.graph.node_count(), 6);
    assert_eq!(h.graph.edge_count(), x.graph.edge_count() + 5);
    let hub = h.graph.hub().unwrap();
    assert!(h.graph.neighbors(hub).iter().all(|&(_, c)| c == HUB_COST));
    for v in 0..5 {
        assert_eq!(h.graph.degree(v), x.graph.degree(v) + 1);
    }
    assert!(h.graph.is_connected());
    assert!(h.attach_virtual_hub().is_err());

    let lone = NetworkGraph::from_edges(1, []).unwrap();
    let single = ProblemInstance::new(lone, 0, DemandVector::empty(), 0).unwrap();
    assert_eq!(single.attach_virtual_hub().unwrap().graph.edge_count(), 1);
}

#[test]
fn sparse_training_graphs_are_routable_with_hub() {
    for seed in 0..20 {
        let cfg = GenConfig::new(Topology::ErdosRenyi { p: 0.08 }, 30, 9, seed);
        let x = generate_instance(&cfg).unwrap().attach_virtual_hub().unwrap();
        let dp = dreyfus_wagner(&x).unwrap();
        assert!(validate(&x.graph, &dp.tree, 0, &x.demands).is_valid());
    }
}
