//! Instance suites, result rows and the resumable CSV runner.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use mcroute_core::{generate_instance, GenConfig, ProblemInstance, Topology};
use mcroute_gpn::train::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::solvers::{timed, Algo, SolverContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    NodeSweep,
    DegreeSweep,
    AvgDegreeSweep,
    UserSweep,
    Incremental,
    Ablation,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 6] = [
        SuiteKind::NodeSweep,
        SuiteKind::DegreeSweep,
        SuiteKind::AvgDegreeSweep,
        SuiteKind::UserSweep,
        SuiteKind::Incremental,
        SuiteKind::Ablation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::NodeSweep => "node-sweep",
            SuiteKind::DegreeSweep => "degree-sweep",
            SuiteKind::AvgDegreeSweep => "avg-degree-sweep",
            SuiteKind::UserSweep => "user-sweep",
            SuiteKind::Incremental => "incremental",
            SuiteKind::Ablation => "ablation",
        }
    }

    /// Graph settings swept by this suite.
    pub fn points(self) -> Vec<Point> {
        let reg = |d| Topology::RandomRegular { degree: d };
        match self {
            SuiteKind::NodeSweep => (30..=50).step_by(5).map(|n| Point::new(format!("n={n}"), reg(4), n, 12)).collect(),
            SuiteKind::DegreeSweep => (3..=7).map(|d| Point::new(format!("degree={d}"), reg(d), 50, 12)).collect(),
            SuiteKind::AvgDegreeSweep => (3..=6)
                .map(|d| {
                    let t = Topology::AverageDegree { degree: d as f64 };
                    Point::new(format!("avg-degree={d}"), t, 50, 12)
                })
                .collect(),
            SuiteKind::UserSweep => [1, 2, 3, 4, 5, 6, 9, 12, 15]
                .into_iter()
                .map(|k| Point::new(format!("users={k}"), reg(4), 50, k))
                .collect(),
            SuiteKind::Incremental => (1..=3).map(|k| Point::new(format!("+{k}"), reg(4), 50, 9 + k)).collect(),
            SuiteKind::Ablation => vec![Point::new("n=30".into(), reg(4), 30, 12)],
        }
    }
}

impl FromStr for SuiteKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        SuiteKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = SuiteKind::ALL.iter().map(|k| k.name()).collect();
            BenchError::Input(format!("unknown suite {s:?} (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub label: String,
    pub topology: Topology,
    pub nodes: usize,
    pub users: usize,
}

impl Point {
    pub fn new(label: String, topology: Topology, nodes: usize, users: usize) -> Self {
        Point {
            label,
            topology,
            nodes,
            users,
        }
    }

    /// Instance `index` of this point; connected so every solver is feasible.
    pub fn instance(&self, suite_seed: u64, point: usize, index: usize) -> Result<(ProblemInstance, u64)> {
        let seed = instance_seed(suite_seed, point, index);
        let inst = generate_instance(&GenConfig::new(self.topology, self.nodes, self.users, seed).connected())?;
        Ok((inst, seed))
    }
}

pub fn instance_seed(suite_seed: u64, point: usize, index: usize) -> u64 {
    derive_seed(&[suite_seed, point as u64, index as u64])
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub suite: SuiteKind,
    pub instances: usize,
    pub solvers: Vec<Algo>,
    pub seed: u64,
    pub threads: usize,
}

impl SuiteConfig {
    pub fn new(suite: SuiteKind, solvers: Vec<Algo>, seed: u64) -> Self {
        SuiteConfig {
            suite,
            instances: 100,
            solvers,
            seed,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(BenchError::Input("solver list is empty".into()));
        }
        if self.instances == 0 {
            return Err(BenchError::Input("need at least one instance per point".into()));
        }
        if self.threads == 0 {
            return Err(BenchError::Input("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub suite: String,
    pub point: String,
    pub instance: usize,
    pub seed: u64,
    pub solver: String,
    pub cost: f64,
    pub runtime: f64,
    pub log10_runtime: f64,
    pub score: f64,
    pub feasible: bool,
}

/// Cost-delay score: `2 * cost + log10(runtime seconds)`.
pub fn score(cost: f64, runtime: f64) -> f64 {
    2.0 * cost + runtime.log10()
}

impl ResultRow {
    pub fn new(suite: &str, point: &str, instance: usize, seed: u64, solver: &str, cost: f64, runtime: f64) -> Self {
        ResultRow {
            suite: suite.to_string(),
            point: point.to_string(),
            instance,
            seed,
            solver: solver.to_string(),
            cost,
            runtime,
            log10_runtime: runtime.log10(),
            score: score(cost, runtime),
            feasible: true,
        }
    }

    pub fn infeasible(suite: &str, point: &str, instance: usize, seed: u64, solver: &str, runtime: f64) -> Self {
        ResultRow {
            cost: f64::NAN,
            score: f64::NAN,
            feasible: false,
            ..ResultRow::new(suite, point, instance, seed, solver, 0.0, runtime)
        }
    }

    fn key(&self) -> (String, usize, String) {
        (self.point.clone(), self.instance, self.solver.clone())
    }
}

/// Solves one instance with every solver, in list order.
pub fn solve_all(
    ctx: &SolverContext,
    solvers: &[Algo],
    suite: &str,
    point: &str,
    index: usize,
    instance: &ProblemInstance,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::with_capacity(solvers.len());
    for &algo in solvers {
        let start = std::time::Instant::now();
        match timed(|| ctx.solve(algo, instance, seed)) {
            Ok((sol, t)) => rows.push(ResultRow::new(suite, point, index, seed, algo.name(), sol.cost, t)),
            Err(e) if e.is_infeasible() => rows.push(ResultRow::infeasible(
                suite,
                point,
                index,
                seed,
                algo.name(),
                start.elapsed().as_secs_f64(),
            )),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

/// Reads complete rows from an earlier, possibly interrupted run and cuts
/// the file back to the last complete line.
fn resume_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(Vec::new());
    };
    let keep = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if keep.len() != text.len() {
        fs::write(path, keep).map_err(BenchError::file(path))?;
    }
    let mut rows = Vec::new();
    for r in csv::Reader::from_reader(keep.as_bytes()).deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

/// Runs every point × instance × solver. With `out`, rows are appended to
/// that CSV as they complete and rows already present are not recomputed.
pub fn run_suite(cfg: &SuiteConfig, ctx: &SolverContext, out: Option<&Path>) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let suite = cfg.suite.name();
    let mut rows = match out {
        Some(p) => resume_rows(p)?,
        None => Vec::new(),
    };
    let done: std::collections::HashSet<_> = rows.iter().map(ResultRow::key).collect();
    let mut writer = match out {
        Some(p) => {
            let exists = p.metadata().map(|m| m.len() > 0).unwrap_or(false);
            let f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(BenchError::file(p))?;
            Some(csv::WriterBuilder::new().has_headers(!exists).from_writer(f))
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| BenchError::Input(e.to_string()))?;

    for (pi, point) in cfg.suite.points().iter().enumerate() {
        let todo: Vec<usize> = (0..cfg.instances)
            .filter(|&i| cfg.solvers.iter().any(|a| !done.contains(&(point.label.clone(), i, a.name().to_string()))))
            .collect();
        for chunk in todo.chunks(cfg.threads.max(1) * 4) {
            let batch: Vec<Vec<ResultRow>> = pool.install(|| {
                chunk
                    .par_iter()
                    .map(|&i| {
                        let (inst, seed) = point.instance(cfg.seed, pi, i)?;
                        let pending: Vec<Algo> = cfg
                            .solvers
                            .iter()
                            .copied()
                            .filter(|a| !done.contains(&(point.label.clone(), i, a.name().to_string())))
                            .collect();
                        solve_all(ctx, &pending, suite, &point.label, i, &inst, seed)
                    })
                    .collect::<Result<_>>()
            })?;
            for row in batch.into_iter().flatten() {
                if let Some(w) = writer.as_mut() {
                    w.serialize(&row)?;
                    w.flush()?;
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub point: String,
    pub solver: String,
    pub instances: usize,
    pub feasible: usize,
    pub mean_cost: f64,
    pub mean_log10_runtime: f64,
    pub mean_score: f64,
}

/// Per point and solver means over feasible rows, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut acc: BTreeMap<(String, String), (usize, usize, f64, f64, f64)> = BTreeMap::new();
    for r in rows {
        let key = (r.point.clone(), r.solver.clone());
        let e = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0, 0, 0.0, 0.0, 0.0)
        });
        e.0 += 1;
        if r.feasible {
            e.1 += 1;
            e.2 += r.cost;
            e.3 += r.log10_runtime;
            e.4 += r.score;
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (n, f, c, l, s) = acc[&key];
            let m = f.max(1) as f64;
            SummaryRow {
                point: key.0,
                solver: key.1,
                instances: n,
                feasible: f,
                mean_cost: c / m,
                mean_log10_runtime: l / m,
                mean_score: s / m,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = fs::File::create(path).map_err(BenchError::file(path))?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text summary table.
pub fn print_summary(out: &mut impl Write, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(out, "{:<16} {:<12} {:>5} {:>10} {:>10} {:>10}", "point", "solver", "ok", "cost", "log10 t", "score")?;
    for r in rows {
        writeln!(
            out,
            "{:<16} {:<12} {:>5} {:>10.4} {:>10.3} {:>10.4}",
            r.point, r.solver, r.feasible, r.mean_cost, r.mean_log10_runtime, r.mean_score
        )?;
    }
    Ok(())
}

/// Mean cost per solver over feasible rows.
pub fn mean_costs(rows: &[ResultRow]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.feasible) {
        let e = acc.entry(r.solver.clone()).or_default();
        e.0 += r.cost;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        assert!((score(6.781, 10f64.powf(1.812)) - 15.374).abs() < 1e-9);
        assert_eq!(score(1.0, 1.0), 2.0);
        let r = ResultRow::new("s", "p", 0, 1, "dp", 3.0, 0.01);
        assert!((r.score - (2.0 * r.cost + r.runtime.log10())).abs() < 1e-9);
    }

    #[test]
    fn suite_points() {
        assert_eq!(SuiteKind::NodeSweep.points().len(), 5);
        assert_eq!(SuiteKind::DegreeSweep.points().len(), 5);
        assert_eq!(SuiteKind::AvgDegreeSweep.points().len(), 4);
        assert_eq!(SuiteKind::UserSweep.points().len(), 9);
        assert_eq!(SuiteKind::Incremental.points()[2].users, 12);
        for k in SuiteKind::ALL {
            assert_eq!(k.name().parse::<SuiteKind>().unwrap(), k);
        }
        assert!("sweep".parse::<SuiteKind>().is_err());
    }

    #[test]
    fn summary_means_skip_infeasible() {
        let rows = vec![
            ResultRow::new("s", "p", 0, 0, "dp", 2.0, 1.0),
            ResultRow::new("s", "p", 1, 0, "dp", 4.0, 10.0),
            ResultRow::infeasible("s", "p", 2, 0, "dp", 1.0),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].instances, s[0].feasible), (3, 2));
        assert_eq!(s[0].mean_cost, 3.0);
        assert_eq!(s[0].mean_log10_runtime, 0.5);
        assert_eq!(s[0].mean_score, 6.5);
    }
}
