//! Score-function gradient of the distance from an agent's rollouts to its
//! closest peer.

use crate::error::{Error, Result};
use crate::metrics::{behavior_characterization, trace_distance, BehaviorTrace, KernelConfig};
use crate::policy::{PolicyParams, Workspace};
use crate::trajectory::Trajectory;

use super::penalty::score_function_gradient;

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityGradient {
    pub grad: Vec<f64>,
    /// `(MMD(τ, peer) − baseline) / |B|` for every trajectory of the batch.
    pub weights: Vec<f64>,
    /// Agent index of the closest peer.
    pub argmin_peer: Option<usize>,
    /// Mean distance from the batch to the closest peer.
    pub value: f64,
    /// Set when there was no peer to diverge from; `grad` is then zero.
    pub no_peers: bool,
}

/// Diversity gradient for agent `self_id` against the reference trajectories
/// of every other agent. `references` is indexed by agent.
pub fn diversity_gradient(
    policy: &PolicyParams,
    batch: &[Trajectory],
    references: &[BehaviorTrace],
    self_id: usize,
    cfg: &KernelConfig,
) -> Result<DiversityGradient> {
    if batch.is_empty() {
        return Err(Error::Empty("rollout batch"));
    }
    let traces = batch
        .iter()
        .map(behavior_characterization)
        .collect::<Result<Vec<_>>>()?;
    diversity_gradient_traces(policy, batch, &traces, references, self_id, cfg)
}

/// As [`diversity_gradient`] with the batch traces already extracted.
pub fn diversity_gradient_traces(
    policy: &PolicyParams,
    batch: &[Trajectory],
    traces: &[BehaviorTrace],
    references: &[BehaviorTrace],
    self_id: usize,
    cfg: &KernelConfig,
) -> Result<DiversityGradient> {
    if batch.is_empty() {
        return Err(Error::Empty("rollout batch"));
    }
    if traces.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            got: traces.len(),
        });
    }
    let n = batch.len() as f64;
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (j, reference) in references.iter().enumerate() {
        if j == self_id {
            continue;
        }
        let d = traces
            .iter()
            .map(|t| trace_distance(t, reference, cfg))
            .collect::<Result<Vec<_>>>()?;
        let mean = d.iter().sum::<f64>() / n;
        if best.as_ref().map_or(true, |(b, _, _)| mean < *b) {
            best = Some((mean, j, d));
        }
    }
    let Some((value, peer, dists)) = best else {
        return Ok(DiversityGradient {
            grad: vec![0.0; policy.len()],
            weights: vec![0.0; batch.len()],
            argmin_peer: None,
            value: 0.0,
            no_peers: true,
        });
    };
    let weights: Vec<f64> = dists.iter().map(|d| (d - value) / n).collect();
    let grad = score_function_gradient(policy, batch, &weights)?;
    Ok(DiversityGradient {
        grad,
        weights,
        argmin_peer: Some(peer),
        value,
        no_peers: false,
    })
}

/// Importance-weighted diversity surrogate
/// `Σ_τ w_τ Σ_t π(a_t|s_t) / π_base(a_t|s_t)` and its gradient. At
/// `policy == base` the gradient equals the diversity gradient.
pub fn diversity_surrogate(
    policy: &PolicyParams,
    base: &PolicyParams,
    batch: &[Trajectory],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if batch.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            got: weights.len(),
        });
    }
    let mut grad = vec![0.0; policy.len()];
    let mut ws = Workspace::default();
    let mut base_ws = Workspace::default();
    let mut total = 0.0;
    for (traj, &w) in batch.iter().zip(weights) {
        for s in &traj.steps {
            let lb = base.eval(&s.obs, &mut base_ws).log_prob(&s.action)?;
            let dist = policy.eval(&s.obs, &mut ws);
            let ratio = (dist.log_prob(&s.action)? - lb).exp();
            total += w * ratio;
            let mut head = dist.d_log_prob(&s.action)?;
            head.iter_mut().for_each(|h| *h *= w * ratio);
            policy.backprop(&mut ws, &head, &mut grad);
        }
    }
    Ok((total, grad))
}
