//! Uniform dispatch over every solver.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use mcroute_core::{
    bee_colony, brute_force, dijkstra_reuse, dreyfus_wagner, genetic_algorithm, sequential_greedy, BcoConfig,
    EnvConfig, GaConfig, ProblemInstance, Solution,
};
use mcroute_gpn::ModelParams;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    BruteForce,
    Dp,
    Dijkstra,
    Greedy,
    Ga,
    Bco,
    Gpn,
}

impl Algo {
    pub const ALL: [Algo; 7] = [
        Algo::BruteForce,
        Algo::Dp,
        Algo::Dijkstra,
        Algo::Greedy,
        Algo::Ga,
        Algo::Bco,
        Algo::Gpn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::BruteForce => "bruteforce",
            Algo::Dp => "dp",
            Algo::Dijkstra => "dijkstra",
            Algo::Greedy => "greedy",
            Algo::Ga => "ga",
            Algo::Bco => "bco",
            Algo::Gpn => "gpn",
        }
    }

    /// Parses a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<Algo>> {
        let list: Vec<Algo> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(BenchError::Input("empty solver list".into()));
        }
        Ok(list)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| BenchError::Input(format!("unknown solver {s:?} (expected one of bruteforce, dp, dijkstra, greedy, ga, bco, gpn)")))
    }
}

/// Everything a solver call may need besides the instance.
#[derive(Debug, Clone, Default)]
pub struct SolverContext {
    pub ga: GaConfig,
    pub bco: BcoConfig,
    pub env: EnvConfig,
    pub model: Option<ModelParams<f32>>,
    /// Give the classical solvers the virtual hub as well.
    pub hub_for_baselines: bool,
}

impl SolverContext {
    pub fn with_model(model: ModelParams<f32>) -> Self {
        SolverContext {
            model: Some(model),
            ..Default::default()
        }
    }

    /// Solves once; `seed` drives the stochastic baselines.
    pub fn solve(&self, algo: Algo, instance: &ProblemInstance, seed: u64) -> Result<Solution> {
        if algo == Algo::Gpn {
            let model = self
                .model
                .as_ref()
                .ok_or_else(|| BenchError::Input("the gpn solver needs a checkpoint".into()))?;
            return Ok(mcroute_gpn::solve(model, instance, &self.env)?);
        }
        let hubbed;
        let inst = if self.hub_for_baselines {
            hubbed = instance.ensure_hub();
            &hubbed
        } else {
            instance
        };
        Ok(match algo {
            Algo::BruteForce => brute_force(inst)?,
            Algo::Dp => dreyfus_wagner(inst)?,
            Algo::Dijkstra => dijkstra_reuse(inst)?,
            Algo::Greedy => sequential_greedy(inst)?,
            Algo::Ga => genetic_algorithm(inst, &GaConfig { seed, ..self.ga.clone() })?,
            Algo::Bco => bee_colony(inst, &BcoConfig { seed, ..self.bco.clone() })?,
            Algo::Gpn => unreachable!("handled above"),
        })
    }
}

/// Solves below one millisecond are repeated this many times and averaged.
pub const FAST_REPEATS: usize = 10;

/// Runs `f` and returns its result with wall-clock seconds per call.
pub fn timed<T>(mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    let first = start.elapsed().as_secs_f64();
    if first >= 1e-3 {
        return Ok((out, first));
    }
    let start = Instant::now();
    for _ in 1..FAST_REPEATS {
        f()?;
    }
    let rest = start.elapsed().as_secs_f64();
    Ok((out, (first + rest) / FAST_REPEATS as f64))
}
