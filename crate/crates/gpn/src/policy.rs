//! The network as a routing policy.

use std::time::Instant;

use mcroute_core::{rollout, DecisionContext, EnvConfig, Mode, NodeId, Policy, ProblemInstance, Rollout, Solution};

use crate::autodiff::{Float, Var};
use crate::error::{GpnError, Result};
use crate::model::Forward;
use crate::params::ModelParams;

fn to_core(e: GpnError) -> mcroute_core::Error {
    match e {
        GpnError::Core(c) => c,
        other => mcroute_core::Error::Policy(other.to_string()),
    }
}

/// Inference policy; no gradients are kept.
pub struct GpnPolicy<'p, T: Float> {
    forward: Forward<'p, T>,
}

impl<'p, T: Float> GpnPolicy<'p, T> {
    pub fn new(params: &'p ModelParams<T>) -> Self {
        GpnPolicy {
            forward: Forward::new(params, false),
        }
    }
}

impl<T: Float> Policy for GpnPolicy<'_, T> {
    fn action_probs(&mut self, ctx: &DecisionContext<'_>) -> mcroute_core::Result<Vec<f64>> {
        let logits = self.forward.decide(ctx).map_err(to_core)?;
        Ok(self.forward.probs(logits))
    }
}

/// Policy that keeps the whole rollout on one tape for a later backward pass.
pub struct RecordingPolicy<'p, T: Float> {
    pub forward: Forward<'p, T>,
    /// Logits and the candidate list for every non-forced decision, in order.
    pub decisions: Vec<(Var, Vec<NodeId>)>,
}

impl<'p, T: Float> RecordingPolicy<'p, T> {
    pub fn new(params: &'p ModelParams<T>) -> Self {
        RecordingPolicy {
            forward: Forward::new(params, true),
            decisions: Vec::new(),
        }
    }

    /// Log-probability nodes of the actions taken in `roll`, one per
    /// non-forced step, paired with the step's position `(episode, index)`.
    pub fn chosen_logps(&mut self, roll: &Rollout) -> Result<Vec<((usize, usize), Var)>> {
        let eps = T::of(self.forward.config().epsilon);
        let mut out = Vec::with_capacity(self.decisions.len());
        let mut it = self.decisions.iter();
        for (e, ep) in roll.episodes.iter().enumerate() {
            for (i, s) in ep.iter().enumerate().filter(|(_, s)| !s.forced) {
                let (logits, actions) = it
                    .next()
                    .ok_or_else(|| GpnError::Shape("fewer recorded decisions than steps".into()))?;
                let k = actions
                    .iter()
                    .position(|&a| a == s.action)
                    .ok_or_else(|| GpnError::Shape(format!("action {} was not a candidate", s.action)))?;
                let lp = self.forward.tape.log_softmax_pick(*logits, k, eps);
                out.push(((e, i), lp));
            }
        }
        Ok(out)
    }
}

impl<T: Float> Policy for RecordingPolicy<'_, T> {
    fn action_probs(&mut self, ctx: &DecisionContext<'_>) -> mcroute_core::Result<Vec<f64>> {
        let logits = self.forward.decide(ctx).map_err(to_core)?;
        self.decisions.push((logits, ctx.actions.to_vec()));
        Ok(self.forward.probs(logits))
    }
}

/// Greedy decode of one instance, reported like any other solver. The tree
/// is scored on the instance the environment routed on, which carries the
/// virtual hub when that is enabled.
pub fn solve<T: Float>(params: &ModelParams<T>, instance: &ProblemInstance, env: &EnvConfig) -> Result<Solution> {
    let start = Instant::now();
    let roll = rollout(&mut GpnPolicy::new(params), instance, env, Mode::Greedy, 0)?;
    Ok(Solution::from_tree(&roll.instance, roll.tree, "gpn", start)?)
}

/// Rollout with the network in either mode.
pub fn run_policy<T: Float>(
    params: &ModelParams<T>,
    instance: &ProblemInstance,
    env: &EnvConfig,
    mode: Mode,
    seed: u64,
) -> Result<Rollout> {
    Ok(rollout(&mut GpnPolicy::new(params), instance, env, mode, seed)?)
}
