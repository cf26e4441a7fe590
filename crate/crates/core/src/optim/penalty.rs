//! Soft guidance toward the agent's memory.

use crate::error::{Error, Result};
use crate::memory::GuidanceMemory;
use crate::metrics::{behavior_characterization, hinge_distance, KernelConfig};
use crate::policy::{PolicyParams, Workspace};
use crate::trajectory::Trajectory;

/// Penalty factor σ with its adaptation schedule and guidance tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyState {
    pub sigma: f64,
    pub eta: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub delta_guid: f64,
    /// Subtract the batch-mean hinge distance from every trajectory's weight.
    /// The expected gradient is unchanged; its variance drops.
    pub baseline: bool,
}

impl Default for PenaltyState {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            eta: 0.1,
            sigma_min: 0.01,
            sigma_max: 100.0,
            delta_guid: 0.1,
            baseline: false,
        }
    }
}

impl PenaltyState {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < sigma_min <= sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.sigma >= self.sigma_min && self.sigma <= self.sigma_max) {
            return Err(Error::InvalidArgument(format!(
                "sigma {} outside [{}, {}]",
                self.sigma, self.sigma_min, self.sigma_max
            )));
        }
        if !(self.eta >= 0.0) || !(self.delta_guid > 0.0) {
            return Err(Error::InvalidArgument(
                "eta must be nonnegative and delta_guid positive".into(),
            ));
        }
        Ok(())
    }
}

/// Raises σ by a factor `1 + η` while trajectories stray from memory and
/// lowers it otherwise, staying inside `[σ_min, σ_max]`.
pub fn adapt_sigma(p: PenaltyState, mean_violation: f64) -> PenaltyState {
    let sigma = if mean_violation > 0.0 {
        (p.sigma * (1.0 + p.eta)).min(p.sigma_max)
    } else {
        (p.sigma / (1.0 + p.eta)).max(p.sigma_min)
    };
    PenaltyState { sigma, ..p }
}

/// `Σ_τ w_τ Σ_t log π_θ(a_t|s_t)`.
pub fn weighted_log_likelihood(
    policy: &PolicyParams,
    trajs: &[Trajectory],
    weights: &[f64],
) -> Result<f64> {
    check_weights(trajs, weights)?;
    let mut ws = Workspace::default();
    let mut total = 0.0;
    for (traj, &w) in trajs.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for s in &traj.steps {
            total += w * policy.eval(&s.obs, &mut ws).log_prob(&s.action)?;
        }
    }
    Ok(total)
}

/// Gradient of [`weighted_log_likelihood`]: `Σ_τ w_τ Σ_t ∇θ log π_θ(a_t|s_t)`.
pub fn score_function_gradient(
    policy: &PolicyParams,
    trajs: &[Trajectory],
    weights: &[f64],
) -> Result<Vec<f64>> {
    check_weights(trajs, weights)?;
    let mut grad = vec![0.0; policy.len()];
    let mut ws = Workspace::default();
    for (traj, &w) in trajs.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for s in &traj.steps {
            let dist = policy.eval(&s.obs, &mut ws);
            let mut head = dist.d_log_prob(&s.action)?;
            head.iter_mut().for_each(|h| *h *= w);
            policy.backprop(&mut ws, &head, &mut grad);
        }
    }
    Ok(grad)
}

fn check_weights(trajs: &[Trajectory], weights: &[f64]) -> Result<()> {
    if trajs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: trajs.len(),
            got: weights.len(),
        });
    }
    Ok(())
}

/// Hinge distance of every trajectory to the memory.
pub fn hinge_distances(
    trajs: &[Trajectory],
    memory: &GuidanceMemory,
    delta_guid: f64,
    cfg: &KernelConfig,
) -> Result<Vec<f64>> {
    trajs
        .iter()
        .map(|t| hinge_distance(&behavior_characterization(t)?, memory, delta_guid, cfg))
        .collect()
}

/// Per-trajectory penalty weights `σ·(d(τ, M) − b) / |B|`, where the
/// baseline `b` is the batch mean when `baseline` is set and 0 otherwise.
pub fn penalty_weights(hinges: &[f64], sigma: f64, baseline: bool) -> Vec<f64> {
    let n = hinges.len().max(1) as f64;
    let b = if baseline {
        hinges.iter().sum::<f64>() / n
    } else {
        0.0
    };
    hinges.iter().map(|d| sigma * (d - b) / n).collect()
}

/// `σ · mean_τ [d(τ, M) · Σ_t ∇θ log π_θ(a_t|s_t)]`, with the hinge distances
/// held constant.
pub fn guidance_penalty_gradient(
    policy: &PolicyParams,
    trajs: &[Trajectory],
    memory: &GuidanceMemory,
    penalty: &PenaltyState,
    cfg: &KernelConfig,
) -> Result<Vec<f64>> {
    let hinges = hinge_distances(trajs, memory, penalty.delta_guid, cfg)?;
    score_function_gradient(
        policy,
        trajs,
        &penalty_weights(&hinges, penalty.sigma, penalty.baseline),
    )
}
