use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcroute_bench::suite::{instance_seed, print_summary, write_csv};
use mcroute_bench::{
    ablation_run, export_all, incremental_run, run_suite, summarize, AblationConfig, Algo, BenchError,
    IncrementalConfig, Result, ResultRow, SolverContext, SuiteConfig, SuiteKind, THREADS_ENV,
};
use mcroute_core::{generate_instance, GenConfig, ProblemInstance, Topology};
use mcroute_gpn::{Checkpoint, ModelConfig, TrainConfig};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "mcroute", version, about = "Demand-aware multicast routing: solvers, training and benchmarks")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads.
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,

    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random instance files.
    Gen(GenArgs),
    /// Solve one instance file.
    Solve(SolveArgs),
    /// Train the policy network.
    Train(TrainArgs),
    /// Compare a checkpoint with other solvers on random instances.
    Eval(EvalArgs),
    /// Run a benchmark suite.
    Bench(BenchArgs),
    /// Add users to existing trees and compare with re-solving.
    Incremental(IncrementalArgs),
    /// Evaluate the four model variants on one instance set.
    Ablation(AblationArgs),
    /// Write Graphviz documents of several solvers' trees.
    Viz(VizArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyKind {
    Regular,
    Er,
    AvgDegree,
}

#[derive(Args, Clone)]
struct GraphArgs {
    #[arg(long, value_enum, default_value = "regular")]
    topology: TopologyKind,
    #[arg(long, default_value_t = 30)]
    nodes: usize,
    #[arg(long, default_value_t = 12)]
    users: usize,
    /// Degree for regular and average-degree graphs.
    #[arg(long, default_value_t = 4.0)]
    degree: f64,
    /// Edge probability for Erdős–Rényi graphs.
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    /// Allow disconnected graphs.
    #[arg(long)]
    allow_disconnected: bool,
}

impl GraphArgs {
    fn topology(&self) -> Result<Topology> {
        Ok(match self.topology {
            TopologyKind::Regular => {
                if self.degree.fract() != 0.0 || self.degree < 1.0 {
                    return Err(BenchError::Input(format!("regular degree must be a positive integer, got {}", self.degree)));
                }
                Topology::RandomRegular {
                    degree: self.degree as usize,
                }
            }
            TopologyKind::Er => Topology::ErdosRenyi { p: self.p },
            TopologyKind::AvgDegree => Topology::AverageDegree { degree: self.degree },
        })
    }

    fn instance(&self, seed: u64) -> Result<ProblemInstance> {
        let mut cfg = GenConfig::new(self.topology()?, self.nodes, self.users, seed);
        if !self.allow_disconnected {
            cfg = cfg.connected();
        }
        Ok(generate_instance(&cfg)?)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Checkpoint for the gpn solver.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Give the classical solvers the virtual hub too.
    #[arg(long)]
    hub: bool,
}

impl SolverArgs {
    fn context(&self) -> Result<SolverContext> {
        let mut ctx = SolverContext {
            hub_for_baselines: self.hub,
            ..Default::default()
        };
        if let Some(path) = &self.checkpoint {
            ctx.model = Some(load_checkpoint(path)?.params);
        }
        Ok(ctx)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algo: Algo,
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file with optional `train`, `model` and `variant` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Two epochs of 500 steps instead of the full schedule.
    #[arg(long)]
    desk: bool,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Per-step metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value = "dp,dijkstra,greedy,gpn")]
    solvers: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: SuiteKind,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value = "dp,ga,bco,dijkstra")]
    solvers: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct IncrementalArgs {
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value = "dp,dijkstra,ga,bco")]
    cold: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct AblationArgs {
    /// Directory holding full.ckpt, gcn.ckpt, no-lstm.ckpt and mlp.ckpt.
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long, default_value_t = 100)]
    instances: usize,
}

#[derive(Args)]
struct VizArgs {
    /// Instance file; a random instance is generated when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value = "dp,dijkstra,greedy")]
    solvers: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    train: Option<TrainConfig>,
    model: Option<ModelConfig>,
    variant: Option<String>,
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(BenchError::Input(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

fn read_instance(path: &Path) -> Result<ProblemInstance> {
    let text = fs::read_to_string(path).map_err(BenchError::file(path))?;
    Ok(ProblemInstance::from_json(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(BenchError::file(path))
}

fn threads(cli: &Cli) -> Result<usize> {
    match cli.threads {
        Some(0) => Err(BenchError::Input("threads must be at least 1".into())),
        Some(t) => Ok(t),
        None => Ok(1),
    }
}

fn report(cli: &Cli, rows: &[ResultRow]) -> Result<()> {
    if let Some(path) = &cli.out {
        write_csv(path, rows)?;
    }
    print_summary(&mut std::io::stdout().lock(), &summarize(rows))?;
    Ok(())
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    if a.count == 0 {
        return Err(BenchError::Input("count must be at least 1".into()));
    }
    match &cli.out {
        None if a.count == 1 => {
            println!("{}", a.graph.instance(cli.seed)?.to_json());
        }
        None => return Err(BenchError::Input("--out DIR is required when generating several instances".into())),
        Some(dir) => {
            fs::create_dir_all(dir).map_err(BenchError::file(dir))?;
            for i in 0..a.count {
                let inst = a.graph.instance(instance_seed(cli.seed, 0, i))?;
                write_text(&dir.join(format!("instance_{i:04}.json")), &inst.to_json())?;
            }
            eprintln!("wrote {} instances to {}", a.count, dir.display());
        }
    }
    Ok(())
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let ctx = a.solver.context()?;
    let (sol, runtime) = mcroute_bench::timed(|| ctx.solve(a.algo, &inst, cli.seed))?;
    if let Some(path) = &cli.out {
        write_text(path, &sol.tree.to_json())?;
    }
    let line = serde_json::json!({
        "solver": a.algo.name(),
        "cost": sol.cost,
        "runtime": runtime,
        "score": mcroute_bench::score(sol.cost, runtime),
        "edges": sol.tree.edge_count(),
    });
    println!("{line}");
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let file: TrainFile = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(BenchError::file(path))?;
            serde_json::from_str(&text).map_err(|e| BenchError::Input(format!("{}: {e}", path.display())))?
        }
        None => TrainFile::default(),
    };
    let mut cfg = file.train.unwrap_or_default();
    if a.desk {
        cfg.epochs = 2;
        cfg.steps_per_epoch = 500;
    }
    if cli.threads.is_some() {
        cfg.threads = threads(cli)?;
    }
    let mut model = file.model.unwrap_or_default();
    if let Some(v) = &file.variant {
        model = model.with_variant(v)?;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.ckpt", model.variant())));

    let mut metrics = match &a.metrics {
        Some(p) => Some(csv::Writer::from_writer(fs::File::create(p).map_err(BenchError::file(p))?)),
        None => None,
    };
    let mut write_err = None;
    let mut on_step = |row: &mcroute_gpn::MetricsRow| {
        if let Some(v) = row.val_cost_ratio {
            eprintln!(
                "step {:>6}  lr {:.2e}  cost {:.4}  baseline {:.4}  |g| {:.3}  val {:.4}",
                row.step, row.lr, row.mean_batch_cost, row.baseline, row.grad_norm, v
            );
        }
        if let Some(w) = metrics.as_mut() {
            if let Err(e) = w.serialize(row) {
                write_err.get_or_insert(e);
            }
        }
    };
    let outcome = match &a.resume {
        Some(path) => mcroute_gpn::train_from(&cfg, load_checkpoint(path)?, cli.seed, &mut on_step)?,
        None => mcroute_gpn::train(&cfg, &model, cli.seed, &mut on_step)?,
    };
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(mut w) = metrics {
        w.flush()?;
    }
    outcome.checkpoint.save(&out)?;
    eprintln!("saved {} after step {}", out.display(), outcome.checkpoint.step);
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let solvers = Algo::parse_list(&a.solvers)?;
    if a.instances == 0 {
        return Err(BenchError::Input("need at least one instance".into()));
    }
    let ctx = a.solver.context()?;
    let label = format!("n={},k={}", a.graph.nodes, a.graph.users);
    let mut rows = Vec::new();
    for i in 0..a.instances {
        let seed = instance_seed(cli.seed, 0, i);
        let inst = a.graph.instance(seed)?;
        rows.extend(mcroute_bench::suite::solve_all(&ctx, &solvers, "eval", &label, i, &inst, seed)?);
    }
    report(cli, &rows)
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let cfg = SuiteConfig {
        instances: a.instances,
        threads: threads(cli)?,
        ..SuiteConfig::new(a.suite, Algo::parse_list(&a.solvers)?, cli.seed)
    };
    if cfg.solvers.contains(&Algo::Gpn) && a.solver.checkpoint.is_none() {
        return Err(BenchError::Input("the gpn solver needs --checkpoint".into()));
    }
    let ctx = a.solver.context()?;
    let rows = run_suite(&cfg, &ctx, cli.out.as_deref())?;
    print_summary(&mut std::io::stdout().lock(), &summarize(&rows))?;
    Ok(())
}

fn cmd_incremental(cli: &Cli, a: &IncrementalArgs) -> Result<()> {
    let cfg = IncrementalConfig {
        instances: a.instances,
        cold: Algo::parse_list(&a.cold)?,
        seed: cli.seed,
        ..Default::default()
    };
    let rows = incremental_run(&cfg, &a.solver.context()?)?;
    report(cli, &rows)
}

fn cmd_ablation(cli: &Cli, a: &AblationArgs) -> Result<()> {
    let cfg = AblationConfig::from_dir(&a.checkpoints, a.instances, cli.seed);
    let rows = ablation_run(&cfg, &SolverContext::default())?;
    report(cli, &rows)
}

fn cmd_viz(cli: &Cli, a: &VizArgs) -> Result<()> {
    let dir = cli
        .out
        .clone()
        .ok_or_else(|| BenchError::Input("viz needs --out DIR".into()))?;
    let inst = match &a.instance {
        Some(p) => read_instance(p)?,
        None => a.graph.instance(cli.seed)?,
    };
    let ctx = a.solver.context()?;
    let mut trees = Vec::new();
    for algo in Algo::parse_list(&a.solvers)? {
        let sol = ctx.solve(algo, &inst, cli.seed)?;
        trees.push((algo.name().to_string(), sol.tree));
    }
    let n = inst.graph.node_count();
    let plot_inst = if trees.iter().any(|(_, t)| t.nodes().iter().any(|&v| v >= n)) || a.solver.hub {
        inst.ensure_hub()
    } else {
        inst.clone()
    };
    fs::create_dir_all(&dir).map_err(BenchError::file(&dir))?;
    for (label, doc) in export_all(&plot_inst, &trees)? {
        let path = dir.join(format!("{label}.dot"));
        write_text(&path, &doc)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Solve(a) => cmd_solve(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Incremental(a) => cmd_incremental(cli, a),
        Command::Ablation(a) => cmd_ablation(cli, a),
        Command::Viz(a) => cmd_viz(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
