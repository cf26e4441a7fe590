//! Episode collection with a policy.

use rand::{Rng, RngCore};

use crate::env::{exploration_bonus, Env, VisitationCounter};
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyParams, ValueParams, Workspace};
use crate::trajectory::{Step, Termination, Trajectory};

/// How actions are chosen during an episode.
enum Pick<'r, R: RngCore + ?Sized> {
    Sample(&'r mut R),
    Greedy,
}

fn run_episode<P: Policy + ?Sized, R: RngCore + ?Sized>(
    policy: &P,
    value: Option<&ValueParams>,
    env: &mut Env,
    reset_seed: u64,
    mut pick: Pick<'_, R>,
    mut visits: Option<&mut VisitationCounter>,
    bonus_lambda: f64,
) -> Result<Trajectory> {
    let mut obs = env.reset(reset_seed);
    let mut steps = Vec::new();
    let mut ws = Workspace::default();
    let limit = env.max_steps();
    loop {
        let dist = policy.distribution(&obs, &mut ws);
        let action = match &mut pick {
            Pick::Sample(rng) => dist.sample(*rng),
            Pick::Greedy => dist.greedy(),
        };
        let log_prob = dist.log_prob(&action)?;
        let v = value.map_or(0.0, |vp| vp.eval(&obs, &mut ws));
        let res = env.step(&action)?;
        let mut bonus = 0.0;
        if let Some(counter) = visits.as_deref_mut() {
            let n = counter.record(&res.position);
            bonus = exploration_bonus(n, bonus_lambda);
        }
        steps.push(Step {
            obs: std::mem::replace(&mut obs, res.observation),
            action,
            reward: res.reward,
            bonus,
            position: res.position,
            log_prob,
            value: v,
        });
        if res.done {
            let termination = res.termination.unwrap_or(Termination::TimeLimit);
            return Ok(Trajectory::new(steps, termination));
        }
        if steps.len() > limit {
            return Err(Error::MalformedTrajectory(format!(
                "environment ran past its step limit of {limit}"
            )));
        }
    }
}

/// `m` episodes with sampled actions.
///
/// Each visited position is recorded in `visits` when given; `bonus_lambda`
/// sets the count-based bonus stored on every step (0 disables it).
pub fn collect_rollouts<R: Rng + ?Sized>(
    policy: &PolicyParams,
    value: &ValueParams,
    env: &mut Env,
    m: usize,
    rng: &mut R,
    mut visits: Option<&mut VisitationCounter>,
    bonus_lambda: f64,
) -> Result<Vec<Trajectory>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    let mut batch = Vec::with_capacity(m);
    for _ in 0..m {
        let seed = rng.next_u64();
        batch.push(run_episode(
            policy,
            Some(value),
            env,
            seed,
            Pick::Sample(rng),
            visits.as_deref_mut(),
            bonus_lambda,
        )?);
    }
    Ok(batch)
}

/// One deterministic episode following the most likely action (categorical)
/// or the mean action (Gaussian) at every step.
pub fn collect_reference_trajectory<P: Policy + ?Sized>(
    policy: &P,
    env: &mut Env,
) -> Result<Trajectory> {
    run_episode::<P, rand_chacha::ChaCha8Rng>(policy, None, env, 0, Pick::Greedy, None, 0.0)
}

/// Average return and fraction of episodes ending at the best goal, over
/// `episodes` sampled-action episodes.
pub fn evaluate<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    env: &mut Env,
    episodes: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("need at least one episode".into()));
    }
    let (mut ret, mut wins) = (0.0, 0usize);
    for _ in 0..episodes {
        let seed = rng.next_u64();
        let t = run_episode(policy, None, env, seed, Pick::Sample(rng), None, 0.0)?;
        ret += t.ret();
        wins += usize::from(t.is_success());
    }
    Ok((ret / episodes as f64, wins as f64 / episodes as f64))
}

/// Return and success of a batch: `(mean return, success fraction)`.
pub fn batch_summary(batch: &[Trajectory]) -> (f64, f64) {
    if batch.is_empty() {
        return (0.0, 0.0);
    }
    let n = batch.len() as f64;
    let ret = batch.iter().map(Trajectory::ret).sum::<f64>() / n;
    let wins = batch.iter().filter(|t| t.is_success()).count() as f64;
    (ret, wins / n)
}
