//! Analytic gradients of the policy-gradient loss against central finite
//! differences, in double precision.

use mcroute_core::{rollout, DecisionContext, EnvConfig, Mode, NodeId, Policy, ProblemInstance, Rollout};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::Result;
use crate::params::ModelParams;
use crate::policy::RecordingPolicy;

/// Replays a fixed action sequence while recording the network's decisions.
struct Replay<'p> {
    inner: RecordingPolicy<'p, f64>,
    actions: Vec<NodeId>,
    next: usize,
}

impl Policy for Replay<'_> {
    fn action_probs(&mut self, ctx: &DecisionContext<'_>) -> mcroute_core::Result<Vec<f64>> {
        self.inner.action_probs(ctx)?;
        let want = self.actions.get(self.next).copied();
        self.next += 1;
        Ok(ctx.actions.iter().map(|&a| if Some(a) == want { 1.0 } else { 0.0 }).collect())
    }
}

/// Loss value and analytic gradient for a fixed trajectory.
pub fn loss_and_grad(
    params: &ModelParams<f64>,
    instance: &ProblemInstance,
    env: &EnvConfig,
    trajectory: &Rollout,
    baseline: f64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    loss_and_grad_with(params, instance, env, trajectory, |g| g - baseline)
}

/// Same, with the advantage of each step computed from its return.
pub fn loss_and_grad_with(
    params: &ModelParams<f64>,
    instance: &ProblemInstance,
    env: &EnvConfig,
    trajectory: &Rollout,
    advantage: impl Fn(f64) -> f64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let (loss, grads, _) = evaluate(params, instance, env, trajectory, advantage)?;
    Ok((loss, grads))
}

/// Loss, gradient and the activation sign pattern of the forward pass.
fn evaluate(
    params: &ModelParams<f64>,
    instance: &ProblemInstance,
    env: &EnvConfig,
    trajectory: &Rollout,
    advantage: impl Fn(f64) -> f64,
) -> Result<(f64, Vec<Array2<f64>>, Vec<bool>)> {
    let actions = trajectory.steps().filter(|s| !s.forced).map(|s| s.action).collect();
    let mut replay = Replay {
        inner: RecordingPolicy::new(params),
        actions,
        next: 0,
    };
    let roll = rollout(&mut replay, instance, env, Mode::Greedy, 0)?;
    let returns = roll.returns_to_go(env.gamma);
    let pol = &mut replay.inner;
    let lps = pol.chosen_logps(&roll)?;
    let weighted: Vec<_> = lps.iter().map(|&((e, i), v)| (v, -advantage(returns[e][i]))).collect();
    let tape = &mut pol.forward.tape;
    let loss = tape.weighted_sum(&weighted);
    let value = tape.scalar(loss);
    let g = tape.backward(loss);
    let grads = pol
        .forward
        .bound()
        .vars()
        .iter()
        .zip(params.zeros_like())
        .map(|(&v, z)| g.get(v).map_or(z, |a| a.as_standard_layout().into_owned()))
        .collect();
    let pattern = pol.forward.tape.activation_pattern();
    Ok((value, grads, pattern))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose `±h` perturbation flips a ReLU or LeakyReLU input, so
    /// the central difference straddles a kink.
    pub skipped: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const FD_STEP: f64 = 1e-4;
pub const REL_FLOOR: f64 = 1e-3;

/// One parameter draw: samples a trajectory, then compares every scalar's
/// analytic derivative with a central difference. Entries where the
/// difference crosses an activation kink are counted but not compared.
pub fn check_draw(config: &ModelConfig, instance: &ProblemInstance, env: &EnvConfig, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::<f64>::init(config, &mut rng)?;
    for t in params.tensors_mut() {
        if t.nrows() == 1 {
            t.mapv_inplace(|_| rand::Rng::gen_range(&mut rng, -0.1..0.1));
        }
    }
    let traj = rollout(&mut crate::policy::GpnPolicy::new(&params), instance, env, Mode::Sample, seed)?;
    let returns = traj.returns_to_go(env.gamma);
    let all: Vec<f64> = returns.iter().flatten().copied().collect();
    let baseline = all.iter().sum::<f64>() / all.len().max(1) as f64 + 0.1;

    let adv = |g: f64| g - baseline;
    let (_, analytic, pattern) = evaluate(&params, instance, env, &traj, adv)?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for b in 0..params.len() {
        for idx in 0..params.tensors()[b].len() {
            let orig = params.tensors()[b].as_slice().expect("standard layout")[idx];
            params.tensors_mut()[b].as_slice_mut().expect("standard layout")[idx] = orig + FD_STEP;
            let (up, _, p_up) = evaluate(&params, instance, env, &traj, adv)?;
            params.tensors_mut()[b].as_slice_mut().expect("standard layout")[idx] = orig - FD_STEP;
            let (down, _, p_down) = evaluate(&params, instance, env, &traj, adv)?;
            params.tensors_mut()[b].as_slice_mut().expect("standard layout")[idx] = orig;
            if p_up != pattern || p_down != pattern {
                skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[b].as_slice().expect("standard layout")[idx];
            worst = worst.max(relative_error(a, numeric, REL_FLOOR));
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        checked,
        skipped,
    })
}

/// Small model used for exhaustive checks.
pub fn check_config() -> ModelConfig {
    ModelConfig {
        hidden: 8,
        heads: 2,
        ..Default::default()
    }
}
