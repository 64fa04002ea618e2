//! Model variants evaluated on one shared instance set.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mcroute_gpn::{Checkpoint, ModelConfig, VARIANTS};

use crate::error::{BenchError, Result};
use crate::solvers::{timed, Algo, SolverContext};
use crate::suite::{solve_all, ResultRow, SuiteKind};

#[derive(Debug, Clone)]
pub struct AblationConfig {
    /// Checkpoint per variant name.
    pub checkpoints: BTreeMap<String, PathBuf>,
    pub instances: usize,
    pub seed: u64,
    /// Reference solvers evaluated alongside the variants.
    pub reference: Vec<Algo>,
}

impl AblationConfig {
    /// Expects `<dir>/<variant>.ckpt` for every variant.
    pub fn from_dir(dir: &std::path::Path, instances: usize, seed: u64) -> Self {
        AblationConfig {
            checkpoints: VARIANTS
                .iter()
                .map(|v| (v.to_string(), dir.join(format!("{v}.ckpt"))))
                .collect(),
            instances,
            seed,
            reference: vec![Algo::Dp],
        }
    }
}

/// Loads each variant's checkpoint, rejecting one whose config is not that
/// variant.
pub fn load_variants(cfg: &AblationConfig) -> Result<Vec<(String, Checkpoint)>> {
    let mut out = Vec::new();
    for v in VARIANTS {
        let path = cfg
            .checkpoints
            .get(v)
            .ok_or_else(|| BenchError::Input(format!("no checkpoint given for variant {v}")))?;
        if !path.exists() {
            return Err(BenchError::Input(format!("missing checkpoint {} for variant {v}", path.display())));
        }
        let ck = Checkpoint::load(path)?;
        let expected = ModelConfig {
            reencode: ck.config.reencode,
            ..ck.config.clone().with_variant(v)?
        };
        if ck.config != expected {
            return Err(BenchError::Input(format!(
                "{} holds variant {}, expected {v}",
                path.display(),
                ck.config.variant()
            )));
        }
        out.push((v.to_string(), ck));
    }
    Ok(out)
}

/// Rows named `gpn-<variant>` plus the reference solvers, all on the
/// ablation instance set.
pub fn ablation_run(cfg: &AblationConfig, base: &SolverContext) -> Result<Vec<ResultRow>> {
    let variants = load_variants(cfg)?;
    let contexts: Vec<(String, SolverContext)> = variants
        .into_iter()
        .map(|(v, ck)| {
            let ctx = SolverContext {
                model: Some(ck.params),
                ..base.clone()
            };
            (v, ctx)
        })
        .collect();
    let suite = SuiteKind::Ablation;
    let point = &suite.points()[0];
    let mut rows = Vec::new();
    for i in 0..cfg.instances {
        let (inst, seed) = point.instance(cfg.seed, 0, i)?;
        rows.extend(solve_all(base, &cfg.reference, suite.name(), &point.label, i, &inst, seed)?);
        for (v, ctx) in &contexts {
            let (sol, t) = timed(|| ctx.solve(Algo::Gpn, &inst, seed))?;
            rows.push(ResultRow::new(suite.name(), &point.label, i, seed, &format!("gpn-{v}"), sol.cost, t));
        }
    }
    Ok(rows)
}
