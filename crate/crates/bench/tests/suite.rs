use std::fs;

use mcroute_bench::suite::{instance_seed, Point};
use mcroute_bench::{run_suite, Algo, SolverContext, SuiteConfig, SuiteKind};

fn small(threads: usize) -> SuiteConfig {
    SuiteConfig {
        instances: 3,
        threads,
        ..SuiteConfig::new(SuiteKind::NodeSweep, vec![Algo::Dp, Algo::Dijkstra, Algo::Greedy], 7)
    }
}

fn strip_runtime(csv: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let header = r.headers().unwrap().clone();
    let keep: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !matches!(*h, "runtime" | "log10_runtime" | "score"))
        .map(|(i, _)| i)
        .collect();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            keep.iter().map(|&i| rec[i].to_string()).collect::<Vec<_>>().join(",")
        })
        .collect()
}

#[test]
fn rows_are_scored_and_reproducible() {
    let ctx = SolverContext::default();
    let rows = run_suite(&small(1), &ctx, None).unwrap();
    assert_eq!(rows.len(), 5 * 3 * 3);
    for r in &rows {
        assert!(r.feasible);
        assert!((r.score - (2.0 * r.cost + r.runtime.log10())).abs() < 1e-9);
    }
    let points = SuiteKind::NodeSweep.points();
    for r in rows.iter().take(9) {
        let pi = points.iter().position(|p| p.label == r.point).unwrap();
        assert_eq!(r.seed, instance_seed(7, pi, r.instance));
        let (inst, _) = points[pi].instance(7, pi, r.instance).unwrap();
        let again = ctx.solve(r.solver.parse().unwrap(), &inst, r.seed).unwrap();
        assert_eq!(again.cost, r.cost);
    }
}

#[test]
fn interrupted_run_resumes_to_the_same_csv() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let cut = dir.path().join("cut.csv");
    let ctx = SolverContext::default();
    run_suite(&small(1), &ctx, Some(&full)).unwrap();
    let text = fs::read_to_string(&full).unwrap();

    // Keep a prefix that ends in the middle of a row.
    let partial = &text[..text.len() * 2 / 5];
    fs::write(&cut, partial).unwrap();
    run_suite(&small(2), &ctx, Some(&cut)).unwrap();
    let resumed = fs::read_to_string(&cut).unwrap();
    assert_eq!(strip_runtime(&text), strip_runtime(&resumed));
}

#[test]
fn thread_count_does_not_change_rows() {
    let ctx = SolverContext::default();
    let a = run_suite(&small(1), &ctx, None).unwrap();
    let b = run_suite(&small(3), &ctx, None).unwrap();
    let key = |r: &mcroute_bench::ResultRow| (r.point.clone(), r.instance, r.solver.clone(), r.seed, r.cost.to_bits());
    assert_eq!(a.iter().map(key).collect::<Vec<_>>(), b.iter().map(key).collect::<Vec<_>>());
}

#[test]
fn invalid_configs_are_rejected() {
    let ctx = SolverContext::default();
    let mut cfg = small(1);
    cfg.solvers.clear();
    assert_eq!(run_suite(&cfg, &ctx, None).unwrap_err().exit_code(), 2);
    let mut cfg = small(1);
    cfg.instances = 0;
    assert_eq!(run_suite(&cfg, &ctx, None).unwrap_err().exit_code(), 2);
    let cfg = SuiteConfig::new(SuiteKind::NodeSweep, vec![Algo::Gpn], 1);
    assert_eq!(run_suite(&cfg, &ctx, None).unwrap_err().exit_code(), 2);
}

#[test]
fn point_instances_are_connected_and_sized() {
    let p = Point::new("x".into(), mcroute_core::Topology::RandomRegular { degree: 4 }, 30, 12);
    let (inst, _) = p.instance(3, 0, 5).unwrap();
    assert_eq!(inst.graph.node_count(), 30);
    assert_eq!(inst.demands.len(), 12);
    assert!(inst.unreachable_destinations().is_empty());
}
