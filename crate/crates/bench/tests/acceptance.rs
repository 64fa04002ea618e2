//! Acceptance checks. Prints one PASS/FAIL line per criterion. With
//! `MCROUTE_ACCEPT_STRICT` set, exits non-zero if any fails.
//!
//! Desk-scale checkpoints are cached under the cargo target directory,
//! keyed by their full training configuration; set `MCROUTE_RETRAIN=1` to
//! ignore the cache. `MCROUTE_ACCEPT=3,5` runs a subset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use mcroute_bench::incremental::{arrival, preserves, warm_gpn, warm_greedy, IncrementalConfig};
use mcroute_bench::suite::mean_costs;
use mcroute_bench::{ablation_run, score, timed, AblationConfig, Algo, SolverContext};
use mcroute_core::{
    brute_force, compute_flows, dreyfus_wagner, generate_instance, level_decomposition_cost, sequential_greedy,
    tree_cost, validate, DemandRule, DemandVector, EnvConfig, GenConfig, NetworkGraph, ProblemInstance, Topology,
};
use mcroute_gpn::gradcheck::{check_config, check_draw};
use mcroute_gpn::train::{derive_seed, GraphSpec};
use mcroute_gpn::{Checkpoint, ModelConfig, TrainConfig, Validator, VARIANTS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

const TRAIN_SEED: u64 = 42;
const LEVELS: [f64; 3] = [1.0, 0.5, 0.25];

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn regular(nodes: usize, users: usize, seed: u64) -> Result<ProblemInstance, String> {
    generate_instance(&GenConfig::new(Topology::RandomRegular { degree: 4 }, nodes, users, seed).connected()).map_err(err)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn threads() -> usize {
    std::env::var("MCROUTE_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or(1)
}

/// Desk-scale checkpoint for `variant`, trained once per configuration.
fn desk_checkpoint(variant: &str) -> Result<Checkpoint, String> {
    let cfg = TrainConfig::desk();
    let model = ModelConfig::default().with_variant(variant).map_err(err)?;
    let key = serde_json::to_string(&(&cfg, &model, TRAIN_SEED)).map_err(err)?;
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).map_err(err)?;
    let ck_path = dir.join(format!("{variant}.ckpt"));
    let key_path = dir.join(format!("{variant}.json"));
    let retrain = std::env::var("MCROUTE_RETRAIN").is_ok_and(|v| v == "1");
    if !retrain && fs::read_to_string(&key_path).ok().as_deref() == Some(key.as_str()) {
        if let Ok(ck) = Checkpoint::load_expecting(&ck_path, &model) {
            eprintln!("  using cached {variant} checkpoint");
            return Ok(ck);
        }
    }
    eprintln!("  training {variant} ({} steps)", cfg.total_steps());
    let start = Instant::now();
    let run_cfg = TrainConfig { threads: threads(), ..cfg };
    let out = mcroute_gpn::train(&run_cfg, &model, TRAIN_SEED, &mut |r| {
        if let Some(v) = r.val_cost_ratio {
            eprintln!("    step {:>4}  val ratio {v:.4}", r.step);
        }
    })
    .map_err(err)?;
    eprintln!("  trained {variant} in {:.0}s", start.elapsed().as_secs_f64());
    out.checkpoint.save(&ck_path).map_err(err)?;
    fs::write(&key_path, key).map_err(err)?;
    Ok(out.checkpoint)
}

fn checkpoint_path(variant: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(format!("{variant}.ckpt"))
}

fn small_instance(rng: &mut ChaCha8Rng) -> Result<ProblemInstance, String> {
    loop {
        let n = rng.gen_range(3..=8);
        let k = rng.gen_range(1..=3.min(n - 1));
        let levels: Vec<f64> = (0..k).map(|_| LEVELS[rng.gen_range(0..3)]).collect();
        let p = rng.gen_range(0.3..0.8);
        let mut cfg = GenConfig::new(Topology::ErdosRenyi { p }, n, k, rng.gen()).connected();
        cfg.demand_rule = DemandRule::Explicit(levels);
        let inst = generate_instance(&cfg).map_err(err)?;
        if inst.graph.edge_count() <= 16 {
            return Ok(inst);
        }
    }
}

fn c1_exact_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let inst = small_instance(&mut rng)?;
        let dp = dreyfus_wagner(&inst).map_err(err)?.cost;
        let bf = brute_force(&inst).map_err(err)?.cost;
        if dp != bf {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((mismatches == 0 && secs < 60.0, format!("{mismatches} mismatches over 200 instances in {secs:.2}s")))
}

fn c2_structure() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = Vec::new();
    for i in 0..500 {
        let n = rng.gen_range(3..=30);
        let k = rng.gen_range(1..=6.min(n - 1));
        let degree = rng.gen_range(3.0..6.0f64).min((n - 1) as f64);
        let topo = Topology::AverageDegree { degree };
        let inst = generate_instance(&GenConfig::new(topo, n, k, derive_seed(&[2, i])).connected()).map_err(err)?;
        let sol = dreyfus_wagner(&inst).map_err(err)?;
        let report = validate(&inst.graph, &sol.tree, inst.source, &inst.demands);
        let flows = compute_flows(&sol.tree, &inst.demands).map_err(err)?;
        let by_flows = tree_cost(&inst.graph, &sol.tree, &inst.demands).map_err(err)?;
        let by_levels = level_decomposition_cost(&inst.graph, &sol.tree, &inst.demands).map_err(err)?;
        let max_below = flows.iter().all(|((_, c), f)| {
            let sub = subtree_max_demand(&sol.tree, c, &inst.demands);
            sub == f
        });
        if !(report.is_valid() && report.is_tree && report.leaves_are_destinations && by_flows == by_levels && max_below) {
            bad.push(i);
        }
    }
    Ok((bad.is_empty(), format!("{} of 500 DP trees failed validation or flow checks {:?}", bad.len(), &bad[..bad.len().min(5)])))
}

fn subtree_max_demand(tree: &mcroute_core::MulticastTree, root: usize, demands: &DemandVector) -> f64 {
    let children = tree.children();
    let mut stack = vec![root];
    let mut best: f64 = 0.0;
    while let Some(v) = stack.pop() {
        best = best.max(demands.demand_of(v).unwrap_or(0.0));
        stack.extend(children.get(&v).into_iter().flatten().copied());
    }
    best
}

fn six_nodes() -> Result<ProblemInstance, String> {
    let g = NetworkGraph::from_edges(
        6,
        [(0, 1, 0.4), (0, 2, 0.7), (1, 2, 0.3), (1, 3, 0.6), (2, 4, 0.5), (3, 4, 0.2), (3, 5, 0.9), (4, 5, 0.35)],
    )
    .map_err(err)?;
    let d = DemandVector::new(vec![(5, 1.0), (3, 0.5), (4, 0.25)]).map_err(err)?;
    ProblemInstance::new(g, 0, d, 0).map_err(err)
}

fn c3_gradients() -> Check {
    let start = Instant::now();
    let inst = six_nodes()?;
    let env = EnvConfig::default();
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for draw in 0..20 {
        let r = check_draw(&check_config(), &inst, &env, 1000 + draw).map_err(err)?;
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-5 && secs < 300.0,
        format!("max relative error {worst:.2e} over {checked} entries ({skipped} on activation kinks skipped), {secs:.1}s"),
    ))
}

fn c4_ordering(full: &Checkpoint) -> Check {
    let ctx = SolverContext::with_model(full.params.clone());
    let algos = [Algo::Dp, Algo::Ga, Algo::Bco, Algo::Gpn, Algo::Dijkstra];
    let mut costs: BTreeMap<Algo, Vec<f64>> = BTreeMap::new();
    for i in 0..100 {
        let seed = derive_seed(&[4, i]);
        let inst = regular(30, 12, seed)?;
        for a in algos {
            costs.entry(a).or_default().push(ctx.solve(a, &inst, seed).map_err(err)?.cost);
        }
    }
    let m = |a| mean(&costs[&a]);
    let (dp, ga, bco, gpn, dij) = (m(Algo::Dp), m(Algo::Ga), m(Algo::Bco), m(Algo::Gpn), m(Algo::Dijkstra));
    let ok = dp <= ga && ga <= bco && dp <= gpn && gpn <= dij && dij >= 1.15 * dp;
    Ok((
        ok,
        format!("dp {dp:.4}  ga {ga:.4}  bco {bco:.4}  gpn {gpn:.4}  dijkstra {dij:.4} ({:.3}x dp)", dij / dp),
    ))
}

fn c5_quality(full: &Checkpoint) -> Check {
    let spec = GraphSpec { nodes: 30, users: 9, p: 0.08 };
    let v = Validator::new(&spec, 50, 5, &EnvConfig::default()).map_err(err)?;
    let ratio = v.ratio(&full.params).map_err(err)?;
    Ok((ratio <= 1.15, format!("greedy mean / dp mean = {ratio:.4} on 50 instances (dp mean {:.4})", v.dp_mean())))
}

fn c6_runtime(full: &Checkpoint) -> Check {
    let ctx = SolverContext::with_model(full.params.clone());
    let mut t: BTreeMap<Algo, Vec<f64>> = BTreeMap::new();
    for i in 0..20 {
        let seed = derive_seed(&[6, i]);
        let inst = regular(50, 12, seed)?;
        for a in [Algo::Gpn, Algo::Dp, Algo::Ga] {
            let (_, secs) = timed(|| ctx.solve(a, &inst, seed)).map_err(err)?;
            t.entry(a).or_default().push(secs);
        }
    }
    let (gpn, dp, ga) = (mean(&t[&Algo::Gpn]), mean(&t[&Algo::Dp]), mean(&t[&Algo::Ga]));
    Ok((
        gpn <= 0.1 * ga && gpn <= 0.1 * dp,
        format!("mean seconds: gpn {gpn:.5}  dp {dp:.5}  ga {ga:.5} (gpn/dp {:.3}, gpn/ga {:.4})", gpn / dp, gpn / ga),
    ))
}

fn c7_scores() -> Check {
    let text = include_str!("fixtures/reference_scores.csv");
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let (mut n, mut worst, mut off) = (0, 0.0f64, Vec::new());
    for rec in r.deserialize::<(usize, String, f64, f64, f64)>() {
        let (nodes, method, cost, delay, expected) = rec.map_err(err)?;
        let got = score(cost, 10f64.powf(delay));
        let d = (got - expected).abs();
        worst = worst.max(d);
        if d > 0.005 {
            off.push(format!("{nodes}/{method}"));
        }
        n += 1;
    }
    Ok((n == 30 && off.is_empty(), format!("{n} pairs, max deviation {worst:.4}, outside tolerance: {off:?}")))
}

fn c8_incremental(full: &Checkpoint) -> Check {
    let ctx = SolverContext::with_model(full.params.clone());
    let cfg = IncrementalConfig {
        instances: 20,
        seed: 8,
        ..Default::default()
    };
    let mut altered = 0;
    let mut below_dp = 0;
    let mut per_k: BTreeMap<usize, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for i in 0..cfg.instances {
        let arr = arrival(&cfg, i).map_err(err)?;
        let greedy_base = sequential_greedy(&arr.base).map_err(err)?.tree;
        let gpn_base = ctx.solve(Algo::Gpn, &arr.base, arr.seed).map_err(err)?.tree;
        for k in 1..=cfg.max_added {
            let inst = arr.with_added(k).map_err(err)?;
            let new = &arr.extra[..k];
            let dp = dreyfus_wagner(&inst).map_err(err)?.cost;
            let (gt, gc) = warm_greedy(&inst, &greedy_base, &arr.base.demands, new).map_err(err)?;
            let (nt, nc) = warm_gpn(&ctx, &inst, &gpn_base, new).map_err(err)?;
            altered += usize::from(!preserves(&greedy_base, &gt)) + usize::from(!preserves(&gpn_base, &nt));
            below_dp += usize::from(gc < dp - 1e-9) + usize::from(nc < dp - 1e-9);
            let e = per_k.entry(k).or_default();
            e.0.push(dp);
            e.1.push(nc);
            e.2.push(gc);
        }
    }
    let mut ok = altered == 0 && below_dp == 0;
    let mut parts = vec![format!("{altered} altered base trees, {below_dp} warm costs below dp")];
    for (k, (dp, gpn, greedy)) in &per_k {
        let ratio = mean(gpn) / mean(dp);
        ok &= ratio <= 1.25;
        parts.push(format!("+{k}: gpn {ratio:.3}x dp, greedy {:.3}x", mean(greedy) / mean(dp)));
    }
    Ok((ok, parts.join("; ")))
}

/// Instances per point for the determinism run; the full 100 would take
/// hours with GA and BCO on one core.
const C9_INSTANCES: &str = "10";

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let run = |name: &str| -> Result<String, String> {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_mcroute"))
            .args(["bench", "--suite", "node-sweep", "--seed", "42", "--instances", C9_INSTANCES, "--out"])
            .arg(&out)
            .output()
            .map_err(err)?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        fs::read_to_string(&out).map_err(err)
    };
    let (a, b) = (run("a.csv")?, run("b.csv")?);
    let (sa, ta) = split_runtime(&a)?;
    let (sb, tb) = split_runtime(&b)?;
    let order = |t: &BTreeMap<String, f64>| {
        let mut v: Vec<_> = t.iter().collect();
        v.sort_by(|x, y| x.1.total_cmp(y.1));
        v.into_iter().map(|(k, _)| k.clone()).collect::<Vec<_>>()
    };
    let same = sa == sb;
    let (oa, ob) = (order(&ta), order(&tb));
    Ok((
        same && oa == ob && !sa.is_empty(),
        format!(
            "{} rows, non-runtime columns identical: {same}; runtime order {} vs {}",
            sa.len(),
            oa.join("<"),
            ob.join("<")
        ),
    ))
}

/// Rows without runtime-derived columns, and mean runtime per solver.
fn split_runtime(csv_text: &str) -> Result<(Vec<String>, BTreeMap<String, f64>), String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let header = r.headers().map_err(err)?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("no {name} column"));
    let (solver, runtime) = (col("solver")?, col("runtime")?);
    let timing = [runtime, col("log10_runtime")?, col("score")?];
    let mut rows = Vec::new();
    let mut times: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(err)?;
        rows.push(
            rec.iter()
                .enumerate()
                .filter(|(i, _)| !timing.contains(i))
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(","),
        );
        times.entry(rec[solver].to_string()).or_default().push(rec[runtime].parse().map_err(err)?);
    }
    Ok((rows, times.into_iter().map(|(k, v)| (k, mean(&v))).collect()))
}

fn c10_ablation() -> Check {
    for v in VARIANTS {
        desk_checkpoint(v)?;
    }
    let cfg = AblationConfig {
        checkpoints: VARIANTS.iter().map(|v| (v.to_string(), checkpoint_path(v))).collect(),
        instances: 100,
        seed: 10,
        reference: vec![Algo::Dp],
    };
    let rows = ablation_run(&cfg, &SolverContext::default()).map_err(err)?;
    let m = mean_costs(&rows);
    let get = |k: &str| m.get(k).copied().ok_or(format!("no rows for {k}"));
    let (full, gcn) = (get("gpn-full")?, get("gpn-gcn")?);
    let detail = m.iter().map(|(k, v)| format!("{k} {v:.4}")).collect::<Vec<_>>().join("  ");
    Ok((gcn > full, detail))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("MCROUTE_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let needs_model = [4, 5, 6, 8].iter().any(|&n| wanted(n));
    let full = if needs_model { Some(desk_checkpoint("full")) } else { None };

    let mut failed = Vec::new();
    let mut record = |n: usize, name: &str, f: &dyn Fn() -> Check| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let (ok, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("{tag} {n:>2} {name:<22} {detail} [{:.1}s]", start.elapsed().as_secs_f64());
        if !ok {
            failed.push(n);
        }
    };
    let with_model = |f: fn(&Checkpoint) -> Check| {
        let full = full.as_ref();
        move || match full {
            Some(Ok(ck)) => f(ck),
            Some(Err(e)) => Err(format!("training failed: {e}")),
            None => Err("no checkpoint".into()),
        }
    };

    record(1, "exact-oracle", &c1_exact_oracle);
    record(2, "tree-and-flow-checks", &c2_structure);
    record(3, "gradient-check", &c3_gradients);
    record(4, "baseline-ordering", &with_model(c4_ordering));
    record(5, "desk-policy-quality", &with_model(c5_quality));
    record(6, "runtime-separation", &with_model(c6_runtime));
    record(7, "score-arithmetic", &c7_scores);
    record(8, "incremental", &with_model(c8_incremental));
    record(9, "determinism", &c9_determinism);
    record(10, "ablation-direction", &c10_ablation);

    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed {failed:?}");
        if std::env::var_os("MCROUTE_ACCEPT_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
