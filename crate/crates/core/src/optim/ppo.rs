//! Clipped-surrogate policy improvement with an optional guidance penalty.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::{PolicyParams, ValueParams, Workspace};
use crate::trajectory::{Action, Trajectory};

use super::adam::Adam;
use super::gae::{compute_gae, normalize_advantages};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch_size: 64,
            lr: 3e-4,
            vf_coef: 0.5,
            ent_coef: 0.01,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip must lie in (0, 1), got {}", self.clip));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.epochs == 0 || self.minibatch_size == 0 {
            return bad("epochs and minibatch size must be positive".into());
        }
        if !(self.vf_coef >= 0.0 && self.ent_coef >= 0.0 && self.max_grad_norm >= 0.0) {
            return bad("coefficients must be nonnegative".into());
        }
        Ok(())
    }
}

/// One on-policy transition prepared for the update.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub action: Action,
    pub advantage: f64,
    pub old_log_prob: f64,
    pub target: f64,
    /// Index of the trajectory the step came from.
    pub traj: usize,
}

/// Flattens a batch into samples with normalized advantages.
///
/// Environment rewards are multiplied by `reward_scale` and the per-step
/// exploration bonus is added. Every episode end is treated as terminal.
pub fn build_samples(
    trajs: &[Trajectory],
    gamma: f64,
    lambda: f64,
    reward_scale: f64,
) -> Result<Vec<Sample>> {
    let mut samples = Vec::with_capacity(trajs.iter().map(Trajectory::len).sum());
    let mut advantages = Vec::with_capacity(samples.capacity());
    for (i, traj) in trajs.iter().enumerate() {
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward * reward_scale + s.bonus).collect();
        let mut values: Vec<f64> = traj.steps.iter().map(|s| s.value).collect();
        values.push(0.0);
        let mut dones = vec![false; traj.len()];
        if let Some(last) = dones.last_mut() {
            *last = true;
        }
        let (adv, targets) = compute_gae(&rewards, &values, &dones, gamma, lambda)?;
        for ((step, a), target) in traj.steps.iter().zip(adv).zip(targets) {
            advantages.push(a);
            samples.push(Sample {
                obs: step.obs.clone(),
                action: step.action.clone(),
                advantage: a,
                old_log_prob: step.log_prob,
                target,
                traj: i,
            });
        }
    }
    normalize_advantages(&mut advantages);
    for (s, a) in samples.iter_mut().zip(advantages) {
        s.advantage = a;
    }
    Ok(samples)
}

/// Head-space derivative of `min(ρA, clip(ρ)A)` with respect to the log-prob.
fn clip_term(logp: f64, s: &Sample, clip: f64) -> (f64, f64) {
    let ratio = (logp - s.old_log_prob).exp();
    let unclipped = ratio * s.advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

/// Mean clipped surrogate over `samples` and its gradient.
pub fn ppo_clip_objective(
    policy: &PolicyParams,
    samples: &[Sample],
    clip: f64,
) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Empty("sample batch"));
    }
    let n = samples.len() as f64;
    let mut grad = vec![0.0; policy.len()];
    let mut ws = Workspace::default();
    let mut total = 0.0;
    for s in samples {
        let dist = policy.eval(&s.obs, &mut ws);
        let logp = dist.log_prob(&s.action)?;
        let (v, dv) = clip_term(logp, s, clip);
        total += v;
        if dv != 0.0 {
            let mut head = dist.d_log_prob(&s.action)?;
            head.iter_mut().for_each(|h| *h *= dv / n);
            policy.backprop(&mut ws, &head, &mut grad);
        }
    }
    Ok((total / n, grad))
}

/// Mean policy entropy over the sampled states and its gradient.
pub fn mean_entropy(policy: &PolicyParams, samples: &[Sample]) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Empty("sample batch"));
    }
    let n = samples.len() as f64;
    let mut grad = vec![0.0; policy.len()];
    let mut ws = Workspace::default();
    let mut total = 0.0;
    for s in samples {
        let dist = policy.eval(&s.obs, &mut ws);
        total += dist.entropy();
        let head: Vec<f64> = dist.d_entropy().into_iter().map(|h| h / n).collect();
        policy.backprop(&mut ws, &head, &mut grad);
    }
    Ok((total / n, grad))
}

/// Mean squared error of the value function against the sample targets.
pub fn value_loss(value: &ValueParams, samples: &[Sample]) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Empty("sample batch"));
    }
    let n = samples.len() as f64;
    let mut grad = vec![0.0; value.theta.len()];
    let mut ws = Workspace::default();
    let mut total = 0.0;
    for s in samples {
        let err = value.eval(&s.obs, &mut ws) - s.target;
        total += err * err;
        value.backprop(&mut ws, 2.0 * err / n, &mut grad);
    }
    Ok((total / n, grad))
}

/// Optimizer state owned by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOptimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl AgentOptimizers {
    pub fn new(policy: &PolicyParams, value: &ValueParams, cfg: &PpoConfig) -> Self {
        Self {
            policy: Adam::new(policy.len(), cfg.lr, cfg.max_grad_norm),
            value: Adam::new(value.theta.len(), cfg.lr, cfg.max_grad_norm),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImprovementStats {
    /// Mean clipped surrogate over the final epoch's minibatches.
    pub clip_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Minibatched gradient ascent on the clipped surrogate plus entropy bonus,
/// minus the guidance penalty `Σ_τ w_τ Σ_t log π(a_t|s_t)`, and descent on
/// the value loss.
///
/// `penalty_weights` holds one weight per trajectory (already scaled by σ and
/// divided by the trajectory count). All-zero weights leave the update
/// identical to plain PPO.
#[allow(clippy::too_many_arguments)]
pub fn policy_improvement_step<R: Rng + ?Sized>(
    policy: &mut PolicyParams,
    value: &mut ValueParams,
    opt: &mut AgentOptimizers,
    samples: &[Sample],
    penalty_weights: &[f64],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<ImprovementStats> {
    if samples.is_empty() {
        return Err(Error::Empty("sample batch"));
    }
    let penalized = penalty_weights.iter().any(|&w| w != 0.0);
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut pg = vec![0.0; policy.len()];
    let mut vg = vec![0.0; value.theta.len()];
    let mut ws = Workspace::default();
    let mut stats = ImprovementStats::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let last = epoch + 1 == cfg.epochs;
        let (mut clip_sum, mut vl_sum, mut ent_sum) = (0.0, 0.0, 0.0);
        for mb in order.chunks(cfg.minibatch_size) {
            let m = mb.len() as f64;
            let scale = n as f64 / m;
            pg.iter_mut().for_each(|g| *g = 0.0);
            vg.iter_mut().for_each(|g| *g = 0.0);
            for &i in mb {
                let s = &samples[i];
                let dist = policy.eval(&s.obs, &mut ws);
                let logp = dist.log_prob(&s.action)?;
                let (obj, d_clip) = clip_term(logp, s, cfg.clip);
                let ent = dist.entropy();
                if !(obj.is_finite() && ent.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "policy objective at epoch {epoch} (log-prob {logp})"
                    )));
                }
                clip_sum += obj;
                ent_sum += ent;
                // Ascent direction for this sample; negated for the optimizer.
                let mut d_logp = d_clip / m;
                if penalized {
                    d_logp -= scale * penalty_weights[s.traj];
                }
                let mut head = dist.d_log_prob(&s.action)?;
                let d_ent = dist.d_entropy();
                for (h, e) in head.iter_mut().zip(d_ent) {
                    *h = -(*h * d_logp + cfg.ent_coef * e / m);
                }
                policy.backprop(&mut ws, &head, &mut pg);

                let err = value.eval(&s.obs, &mut ws) - s.target;
                if !err.is_finite() {
                    return Err(Error::NonFinite(format!("value loss at epoch {epoch}")));
                }
                vl_sum += err * err;
                value.backprop(&mut ws, cfg.vf_coef * 2.0 * err / m, &mut vg);
            }
            if pg.iter().chain(&vg).any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient at epoch {epoch}")));
            }
            opt.policy.step(&mut policy.theta, &pg);
            opt.value.step(&mut value.theta, &vg);
        }
        if last {
            stats = ImprovementStats {
                clip_objective: clip_sum / n as f64,
                value_loss: vl_sum / n as f64,
                entropy: ent_sum / n as f64,
            };
        }
    }
    Ok(stats)
}
