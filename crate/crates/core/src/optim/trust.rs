//! KL-constrained exploration steps: Fisher-vector products, conjugate
//! gradient, and a backtracking line search.

use log::warn;

use crate::error::{Error, Result};
use crate::policy::{ActionDistribution, PolicyParams, Workspace};
use crate::trajectory::{Action, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreConfig {
    pub delta_kl: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_steps: usize,
    pub backtrack_ratio: f64,
    /// Fraction of the run, from the start, that uses plain first-order
    /// ascent instead of the trust-region step.
    pub first_order_fraction: f64,
    pub div_coeff: f64,
    /// Upper bound on the states used for Fisher-vector products; larger
    /// batches are thinned to evenly spaced states.
    pub fvp_max_states: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            delta_kl: 0.01,
            cg_iters: 10,
            cg_damping: 0.1,
            backtrack_steps: 10,
            backtrack_ratio: 0.8,
            first_order_fraction: 0.3,
            div_coeff: 0.05,
            fvp_max_states: 256,
        }
    }
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if !(self.delta_kl > 0.0) {
            return bad("delta_kl must be positive");
        }
        if self.cg_iters == 0 || self.backtrack_steps == 0 || self.fvp_max_states == 0 {
            return bad("cg_iters, backtrack_steps and fvp_max_states must be positive");
        }
        if !(self.cg_damping > 0.0) {
            return bad("cg_damping must be positive");
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return bad("backtrack_ratio must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.first_order_fraction) {
            return bad("first_order_fraction must lie in [0, 1]");
        }
        if !(self.div_coeff >= 0.0) {
            return bad("div_coeff must be nonnegative");
        }
        Ok(())
    }
}

/// Output-space Fisher matrix of `dist` applied to `u`.
///
/// Categorical logits: `(diag(p) − ppᵀ)u`. Gaussian `[mean, log_std]`:
/// `u_mean / σ²` and `2·u_log_std`.
pub fn output_fisher_product(dist: &ActionDistribution, u: &[f64]) -> Vec<f64> {
    match dist {
        ActionDistribution::Categorical { .. } => {
            let p = dist.probs().unwrap_or_default();
            let pu: f64 = p.iter().zip(u).map(|(a, b)| a * b).sum();
            p.iter().zip(u).map(|(pi, ui)| pi * (ui - pu)).collect()
        }
        ActionDistribution::Gaussian { log_std, .. } => {
            let d = log_std.len();
            let mut out = Vec::with_capacity(2 * d);
            for (i, ls) in log_std.iter().enumerate() {
                out.push(u[i] * (-2.0 * ls).exp());
            }
            for i in 0..d {
                out.push(2.0 * u[d + i]);
            }
            out
        }
    }
}

/// `(F + damping·I)v`, where `F` is the Hessian at `θ` of the mean over
/// `states` of `KL(π_θ(·|s) ‖ π_θ'(·|s))` with respect to `θ'`.
pub fn fisher_vector_product(
    policy: &PolicyParams,
    states: &[Vec<f64>],
    v: &[f64],
    damping: f64,
) -> Result<Vec<f64>> {
    if v.len() != policy.len() {
        return Err(Error::DimensionMismatch {
            expected: policy.len(),
            got: v.len(),
        });
    }
    let mut out = vec![0.0; v.len()];
    if !states.is_empty() {
        let n = states.len() as f64;
        let mut ws = Workspace::default();
        let mut ju = Vec::new();
        for s in states {
            let dist = policy.head_jvp_into(s, v, &mut ws, &mut ju);
            let mut w = output_fisher_product(&dist, &ju);
            w.iter_mut().for_each(|x| *x /= n);
            policy.backprop(&mut ws, &w, &mut out);
        }
    }
    for (o, vi) in out.iter_mut().zip(v) {
        *o += damping * vi;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖r‖/‖g‖` after each iteration.
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `H x = g` for symmetric positive definite `H` given as a product.
/// Stops once the relative residual falls to `tol` or after `iters` steps.
pub fn conjugate_gradient<F>(mut hvp: F, g: &[f64], iters: usize, tol: f64) -> CgSolution
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = g.len();
    let mut x = vec![0.0; n];
    let g_norm = dot(g, g).sqrt();
    let mut sol = CgSolution {
        x: Vec::new(),
        iterations: 0,
        residuals: Vec::new(),
    };
    if g_norm == 0.0 {
        sol.x = x;
        return sol;
    }
    let mut r = g.to_vec();
    let mut p = g.to_vec();
    let mut rr = dot(&r, &r);
    for it in 0..iters {
        let hp = hvp(&p);
        let php = dot(&p, &hp);
        if !(php > 0.0) {
            break;
        }
        let alpha = rr / php;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        let rr_new = dot(&r, &r);
        sol.iterations = it + 1;
        sol.residuals.push(rr_new.sqrt() / g_norm);
        if rr_new.sqrt() <= tol * g_norm {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    sol.x = x;
    sol
}

/// What the exploration line search needs to know about the objective.
pub trait TrustRegionModel {
    /// Damped Fisher-vector product at the base parameters.
    fn fvp(&self, v: &[f64]) -> Result<Vec<f64>>;
    /// Mean KL from the base policy to the policy at `theta`.
    fn kl(&self, theta: &[f64]) -> Result<f64>;
    /// Surrogate objective to be kept from decreasing.
    fn surrogate(&self, theta: &[f64]) -> Result<f64>;
    /// `(kl, surrogate)` at `theta`.
    fn kl_and_surrogate(&self, theta: &[f64]) -> Result<(f64, f64)> {
        Ok((self.kl(theta)?, self.surrogate(theta)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOutcome {
    pub theta: Vec<f64>,
    pub accepted: bool,
    /// Measured KL of the accepted step, 0 when nothing was accepted.
    pub kl: f64,
    /// Accepted step length as a fraction of the full step.
    pub step_fraction: f64,
}

impl ExploreOutcome {
    fn rejected(theta: &[f64]) -> Self {
        Self {
            theta: theta.to_vec(),
            accepted: false,
            kl: 0.0,
            step_fraction: 0.0,
        }
    }
}

/// Relative slack on the KL bound so that a full step landing exactly on the
/// boundary is not rejected by rounding.
const KL_SLACK: f64 = 1e-10;

/// Natural-gradient ascent step on the surrogate inside the KL ball.
pub fn exploration_step<M: TrustRegionModel>(
    theta: &[f64],
    model: &M,
    g: &[f64],
    cfg: &ExploreConfig,
) -> Result<ExploreOutcome> {
    if g.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: g.len(),
        });
    }
    if g.iter().all(|&x| x == 0.0) {
        return Ok(ExploreOutcome::rejected(theta));
    }
    let mut fvp_err = None;
    let sol = conjugate_gradient(
        |v| match model.fvp(v) {
            Ok(r) => r,
            Err(e) => {
                fvp_err.get_or_insert(e);
                vec![0.0; v.len()]
            }
        },
        g,
        cfg.cg_iters,
        1e-10,
    );
    if let Some(e) = fvp_err {
        return Err(e);
    }
    let hx = model.fvp(&sol.x)?;
    let xhx = dot(&sol.x, &hx);
    if !(xhx.is_finite() && xhx > 0.0) {
        warn!("exploration step skipped: curvature {xhx} along the search direction");
        return Ok(ExploreOutcome::rejected(theta));
    }
    let beta = (2.0 * cfg.delta_kl / xhx).sqrt();
    let full: Vec<f64> = sol.x.iter().map(|x| beta * x).collect();
    if full.iter().any(|x| !x.is_finite()) {
        warn!("exploration step skipped: non-finite step");
        return Ok(ExploreOutcome::rejected(theta));
    }
    let base = model.surrogate(theta)?;
    let mut frac = 1.0;
    for _ in 0..cfg.backtrack_steps {
        let cand: Vec<f64> = theta.iter().zip(&full).map(|(t, s)| t + frac * s).collect();
        let (kl, sur) = model.kl_and_surrogate(&cand)?;
        if kl.is_finite() && sur.is_finite() && kl <= cfg.delta_kl * (1.0 + KL_SLACK) && sur >= base {
            return Ok(ExploreOutcome {
                theta: cand,
                accepted: true,
                kl,
                step_fraction: frac,
            });
        }
        frac *= cfg.backtrack_ratio;
    }
    Ok(ExploreOutcome::rejected(theta))
}

/// `θ + lr·div_coeff·g`.
pub fn first_order_exploration(theta: &[f64], g: &[f64], div_coeff: f64, lr: f64) -> Vec<f64> {
    theta
        .iter()
        .zip(g)
        .map(|(t, gi)| t + lr * div_coeff * gi)
        .collect()
}

/// The diversity surrogate and KL of a policy over one rollout batch, with
/// the base policy's distributions cached.
pub struct PolicyExploreModel<'a> {
    base: &'a PolicyParams,
    states: Vec<Vec<f64>>,
    fvp_states: Vec<Vec<f64>>,
    actions: Vec<Action>,
    base_dists: Vec<ActionDistribution>,
    base_log_probs: Vec<f64>,
    weights: Vec<f64>,
    damping: f64,
}

impl<'a> PolicyExploreModel<'a> {
    /// `traj_weights` are the per-trajectory diversity weights. At most
    /// `fvp_max_states` evenly spaced states enter Fisher-vector products.
    pub fn new(
        base: &'a PolicyParams,
        batch: &[Trajectory],
        traj_weights: &[f64],
        damping: f64,
        fvp_max_states: usize,
    ) -> Result<Self> {
        if batch.len() != traj_weights.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                got: traj_weights.len(),
            });
        }
        let mut m = Self {
            base,
            states: Vec::new(),
            fvp_states: Vec::new(),
            actions: Vec::new(),
            base_dists: Vec::new(),
            base_log_probs: Vec::new(),
            weights: Vec::new(),
            damping,
        };
        let mut ws = Workspace::default();
        for (traj, &w) in batch.iter().zip(traj_weights) {
            for s in &traj.steps {
                let d = base.eval(&s.obs, &mut ws);
                m.base_log_probs.push(d.log_prob(&s.action)?);
                m.base_dists.push(d);
                m.states.push(s.obs.clone());
                m.actions.push(s.action.clone());
                m.weights.push(w);
            }
        }
        let n = m.states.len();
        let k = fvp_max_states.max(1);
        m.fvp_states = if n <= k {
            m.states.clone()
        } else {
            (0..k).map(|i| m.states[i * n / k].clone()).collect()
        };
        Ok(m)
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }
}

impl TrustRegionModel for PolicyExploreModel<'_> {
    fn fvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        fisher_vector_product(self.base, &self.fvp_states, v, self.damping)
    }

    fn kl(&self, theta: &[f64]) -> Result<f64> {
        if self.states.is_empty() {
            return Ok(0.0);
        }
        let p = self.base.with_theta(theta.to_vec());
        let mut ws = Workspace::default();
        let mut total = 0.0;
        for (s, d) in self.states.iter().zip(&self.base_dists) {
            total += d.kl(&p.eval(s, &mut ws))?;
        }
        Ok(total / self.states.len() as f64)
    }

    fn surrogate(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.kl_and_surrogate(theta)?.1)
    }

    fn kl_and_surrogate(&self, theta: &[f64]) -> Result<(f64, f64)> {
        if self.states.is_empty() {
            return Ok((0.0, 0.0));
        }
        let p = self.base.with_theta(theta.to_vec());
        let mut ws = Workspace::default();
        let (mut kl, mut sur) = (0.0, 0.0);
        for i in 0..self.states.len() {
            let d = p.eval(&self.states[i], &mut ws);
            kl += self.base_dists[i].kl(&d)?;
            if self.weights[i] != 0.0 {
                let lp = d.log_prob(&self.actions[i])?;
                sur += self.weights[i] * (lp - self.base_log_probs[i]).exp();
            }
        }
        Ok((kl / self.states.len() as f64, sur))
    }
}
