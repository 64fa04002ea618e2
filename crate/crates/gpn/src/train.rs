//! REINFORCE training with a moving-average baseline and Adam.

use mcroute_core::{
    dreyfus_wagner, generate_instance, rollout, tree_cost, EnvConfig, GenConfig, Mode, ProblemInstance, Topology,
};
use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Float;
use crate::checkpoint::Checkpoint;
use crate::config::ModelConfig;
use crate::error::{GpnError, Result};
use crate::params::ModelParams;
use crate::policy::{solve, GpnPolicy, RecordingPolicy};

/// Random graphs used for training or validation batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: usize,
    pub users: usize,
    pub p: f64,
}

impl GraphSpec {
    pub fn instance(&self, seed: u64) -> Result<ProblemInstance> {
        Ok(generate_instance(&GenConfig::new(
            Topology::ErdosRenyi { p: self.p },
            self.nodes,
            self.users,
            seed,
        ))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip: f64,
    pub lr_decay: f64,
    pub milestone: usize,
    pub batch: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub baseline_decay: f64,
    /// Starting baseline; `None` seeds it from a gradient-free pass over the
    /// first batch.
    pub baseline_init: Option<f64>,
    pub train: GraphSpec,
    pub validation: GraphSpec,
    pub val_instances: usize,
    /// Validate every this many steps and after the last one; 0 disables.
    pub val_every: usize,
    pub divergence_ratio: f64,
    pub divergence_patience: usize,
    pub threads: usize,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip: 1.0,
            lr_decay: 0.96,
            milestone: 500,
            batch: 16,
            epochs: 20,
            steps_per_epoch: 2500,
            baseline_decay: 0.9,
            baseline_init: None,
            train: GraphSpec {
                nodes: 30,
                users: 9,
                p: 0.10,
            },
            validation: GraphSpec {
                nodes: 30,
                users: 9,
                p: 0.08,
            },
            val_instances: 8,
            val_every: 100,
            divergence_ratio: 10.0,
            divergence_patience: 3,
            threads: 1,
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Two epochs of 500 steps.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 2,
            steps_per_epoch: 500,
            ..Default::default()
        }
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GpnError::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.milestone == 0 {
            return bad("milestone must be at least 1");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline decay must lie in [0, 1)");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        self.env.validate()?;
        Ok(())
    }

    /// Learning rate in effect at `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.lr_decay.powi((step / self.milestone) as i32)
    }
}

/// Exponential moving average of returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingBaseline {
    pub value: Option<f64>,
    pub decay: f64,
}

impl MovingBaseline {
    pub fn new(decay: f64, init: Option<f64>) -> Self {
        MovingBaseline { value: init, decay }
    }

    pub fn update(&mut self, r: f64) -> f64 {
        let v = match self.value {
            Some(b) => self.decay * b + (1.0 - self.decay) * r,
            None => r,
        };
        self.value = Some(v);
        v
    }

    pub fn get(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }
}

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
}

impl Adam {
    pub fn new(params: &ModelParams<f32>, cfg: &TrainConfig) -> Self {
        Adam {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<f32>, grads: &[Array2<f32>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1 as f32, self.beta2 as f32, self.eps as f32);
        let step = (lr / c1) as f32;
        let c2 = c2 as f32;
        for ((p, g), (m, v)) in params.tensors_mut().iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Global L2 norm.
pub fn grad_norm<T: Float>(grads: &[Array2<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&v| Float::to_f64(v).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Rescales to norm at most `clip`; returns the norm before clipping.
pub fn clip_grads(grads: &mut [Array2<f32>], clip: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > clip {
        let s = (clip / norm) as f32;
        for g in grads.iter_mut() {
            g.mapv_inplace(|v| v * s);
        }
    }
    norm
}

/// Mixes several words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Gradient and statistics from one instance.
pub struct InstanceGrad<T> {
    pub grads: Vec<Array2<T>>,
    pub cost: f64,
    pub return_sum: f64,
    pub decisions: usize,
}

/// Sampled rollout on `instance` and the gradient of
/// `-(1/scale) * sum_t (G_t - baseline) * log pi(a_t)`.
pub fn instance_gradient<T: Float>(
    params: &ModelParams<T>,
    instance: &ProblemInstance,
    env: &EnvConfig,
    baseline: f64,
    scale: f64,
    seed: u64,
) -> Result<InstanceGrad<T>> {
    let mut pol = RecordingPolicy::new(params);
    let roll = rollout(&mut pol, instance, env, Mode::Sample, seed)?;
    let returns = roll.returns_to_go(env.gamma);
    let lps = pol.chosen_logps(&roll)?;
    let mut return_sum = 0.0;
    let weighted: Vec<_> = lps
        .iter()
        .map(|&((e, i), v)| {
            let g = returns[e][i];
            return_sum += g;
            (v, T::of(-(g - baseline) / scale))
        })
        .collect();
    let cost = tree_cost(&roll.instance.graph, &roll.tree, &roll.instance.demands)?;
    let grads = if weighted.is_empty() {
        params.zeros_like()
    } else {
        let tape = &mut pol.forward.tape;
        let loss = tape.weighted_sum(&weighted);
        if !tape.scalar(loss).is_finite() {
            return Err(GpnError::NonFinite("policy-gradient loss".into()));
        }
        let g = tape.backward(loss);
        let zero = params.zeros_like();
        pol.forward
            .bound()
            .vars()
            .iter()
            .zip(zero)
            .map(|(&v, z)| g.get(v).cloned().unwrap_or(z))
            .collect()
    };
    for (name, g) in params.names().iter().zip(&grads) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(GpnError::NonFinite(format!("gradient of {name}")));
        }
    }
    Ok(InstanceGrad {
        grads,
        cost,
        return_sum,
        decisions: lps.len(),
    })
}

/// Mean return over non-forced decisions of a sampled rollout, without
/// gradients.
fn sampled_return_stats(params: &ModelParams<f32>, instance: &ProblemInstance, env: &EnvConfig, seed: u64) -> Result<(f64, usize)> {
    let roll = rollout(&mut GpnPolicy::new(params), instance, env, Mode::Sample, seed)?;
    let returns = roll.returns_to_go(env.gamma);
    let mut sum = 0.0;
    let mut n = 0;
    for (e, ep) in roll.episodes.iter().enumerate() {
        for (i, s) in ep.iter().enumerate() {
            if !s.forced {
                sum += returns[e][i];
                n += 1;
            }
        }
    }
    Ok((sum, n))
}

/// Fixed greedy validation set with optimal reference costs.
pub struct Validator {
    instances: Vec<ProblemInstance>,
    dp_mean: f64,
    env: EnvConfig,
}

impl Validator {
    pub fn new(spec: &GraphSpec, count: usize, seed: u64, env: &EnvConfig) -> Result<Self> {
        let mut instances = Vec::with_capacity(count);
        let mut dp = 0.0;
        for i in 0..count {
            let inst = spec.instance(derive_seed(&[seed, 0x7A11, i as u64]))?;
            let reference = if env.use_virtual_hub { inst.ensure_hub() } else { inst.clone() };
            dp += dreyfus_wagner(&reference)?.cost;
            instances.push(inst);
        }
        Ok(Validator {
            instances,
            dp_mean: dp / count.max(1) as f64,
            env: env.clone(),
        })
    }

    pub fn dp_mean(&self) -> f64 {
        self.dp_mean
    }

    /// Mean greedy cost over the optimal mean.
    pub fn ratio(&self, params: &ModelParams<f32>) -> Result<f64> {
        let mut total = 0.0;
        for inst in &self.instances {
            total += solve(params, inst, &self.env)?.cost;
        }
        Ok(total / self.instances.len().max(1) as f64 / self.dp_mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    pub lr: f64,
    pub mean_batch_cost: f64,
    pub baseline: f64,
    pub grad_norm: f64,
    pub val_cost_ratio: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
}

/// Trains from scratch.
pub fn train(
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(model_cfg, &mut rng)?;
    let start = Checkpoint {
        config: model_cfg.clone(),
        step: 0,
        rng,
        params,
    };
    train_from(train_cfg, start, seed, on_step)
}

/// Continues training from `start`. Optimizer moments start from zero.
pub fn train_from(
    cfg: &TrainConfig,
    start: Checkpoint,
    seed: u64,
    on_step: &mut dyn FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Checkpoint {
        config,
        step: first,
        mut rng,
        mut params,
    } = start;
    let first = first as usize;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| GpnError::Config(e.to_string()))?;
    let validator = if cfg.val_every > 0 && cfg.val_instances > 0 {
        Some(Validator::new(&cfg.validation, cfg.val_instances, seed, &cfg.env)?)
    } else {
        None
    };
    let mut adam = Adam::new(&params, cfg);
    let mut baseline = MovingBaseline::new(cfg.baseline_decay, cfg.baseline_init);
    let mut metrics = Vec::new();
    let mut strikes = 0;
    let total = cfg.total_steps();

    for step in first..total {
        let step_seed = rng.next_u64();
        let jobs: Vec<(ProblemInstance, u64)> = (0..cfg.batch)
            .map(|i| {
                let inst = cfg.train.instance(derive_seed(&[step_seed, i as u64, 0]))?;
                Ok((inst, derive_seed(&[step_seed, i as u64, 1])))
            })
            .collect::<Result<_>>()?;

        if baseline.value.is_none() {
            let stats: Vec<(f64, usize)> = pool.install(|| {
                jobs.par_iter()
                    .map(|(inst, s)| sampled_return_stats(&params, inst, &cfg.env, *s))
                    .collect::<Result<_>>()
            })?;
            let (sum, n) = stats.iter().fold((0.0, 0), |(a, b), &(s, k)| (a + s, b + k));
            baseline.value = Some(if n > 0 { sum / n as f64 } else { 0.0 });
        }
        let b = baseline.get();
        let scale = cfg.batch as f64;
        let results: Vec<InstanceGrad<f32>> = pool.install(|| {
            jobs.par_iter()
                .map(|(inst, s)| instance_gradient(&params, inst, &cfg.env, b, scale, *s))
                .collect::<Result<_>>()
        })?;

        let mut grads = params.zeros_like();
        let (mut cost, mut ret, mut n) = (0.0, 0.0, 0usize);
        for r in &results {
            for (acc, g) in grads.iter_mut().zip(&r.grads) {
                *acc += g;
            }
            cost += r.cost;
            ret += r.return_sum;
            n += r.decisions;
        }
        let norm = clip_grads(&mut grads, cfg.clip);
        let lr = cfg.lr_at(step);
        adam.step(&mut params, &grads, lr);
        params.check_finite()?;
        if n > 0 {
            baseline.update(ret / n as f64);
        }

        let done = step + 1;
        let val = match &validator {
            Some(v) if done % cfg.val_every == 0 || done == total => Some(v.ratio(&params)?),
            _ => None,
        };
        let row = MetricsRow {
            step: done,
            lr,
            mean_batch_cost: cost / cfg.batch as f64,
            baseline: baseline.get(),
            grad_norm: norm,
            val_cost_ratio: val,
        };
        on_step(&row);
        metrics.push(row);
        if let Some(r) = val {
            if r > cfg.divergence_ratio || !r.is_finite() {
                strikes += 1;
                if strikes >= cfg.divergence_patience {
                    return Err(GpnError::Diverged(format!(
                        "validation cost ratio {r:.3} above {} for {strikes} consecutive evaluations at step {done}",
                        cfg.divergence_ratio
                    )));
                }
            } else {
                strikes = 0;
            }
        }
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config,
            step: total.max(first) as u64,
            rng,
            params,
        },
        metrics,
    })
}
