#![allow(dead_code)]

pub mod checks;

use pose_core::metrics::BehaviorTrace;
use pose_core::policy::{Head, PolicyArch, PolicyParams};
use pose_core::{Action, Step, Termination, Trajectory};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Random parameters of moderate scale so that softmax outputs are not flat.
pub fn random_policy<R: Rng>(arch: PolicyArch, rng: &mut R) -> PolicyParams {
    let theta = (0..arch.num_params()).map(|_| 0.7 * normal(rng)).collect();
    PolicyParams::from_theta(arch, theta).unwrap()
}

pub fn small_categorical() -> PolicyArch {
    PolicyArch::new(2, vec![4], Head::Categorical(4))
}

pub fn small_gaussian() -> PolicyArch {
    PolicyArch::new(2, vec![4], Head::Gaussian(2))
}

pub fn random_action<R: Rng>(head: Head, rng: &mut R) -> Action {
    match head {
        Head::Categorical(n) => Action::Discrete(rng.gen_range(0..n)),
        Head::Gaussian(d) => Action::Continuous((0..d).map(|_| normal(rng)).collect()),
    }
}

/// A batch of synthetic trajectories whose actions do not come from any policy.
pub fn random_batch<R: Rng>(head: Head, n: usize, len: usize, rng: &mut R) -> Vec<Trajectory> {
    (0..n)
        .map(|_| {
            let steps = (0..len)
                .map(|_| Step {
                    obs: vec![normal(rng), normal(rng)],
                    action: random_action(head, rng),
                    reward: rng.gen_range(0.0..1.0),
                    bonus: 0.0,
                    position: vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                    log_prob: 0.0,
                    value: 0.0,
                })
                .collect();
            Trajectory::new(steps, Termination::TimeLimit)
        })
        .collect()
}

pub fn random_points<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect()
}

/// Central differences of `f` at `x`.
pub fn finite_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-8)
}

/// Brute-force biased MMD² with a fixed RBF bandwidth.
pub fn brute_mmd(x: &[Vec<f64>], y: &[Vec<f64>], h: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        (-d2 / (2.0 * h * h)).exp()
    };
    let mut xx = 0.0;
    for a in x {
        for b in x {
            xx += k(a, b);
        }
    }
    let mut yy = 0.0;
    for a in y {
        for b in y {
            yy += k(a, b);
        }
    }
    let mut xy = 0.0;
    for a in x {
        for b in y {
            xy += k(a, b);
        }
    }
    let (n, m) = (x.len() as f64, y.len() as f64);
    xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m)
}

pub fn positions(t: &Trajectory) -> Vec<Vec<f64>> {
    t.steps.iter().map(|s| s.position.clone()).collect()
}

pub fn trace(points: &[Vec<f64>]) -> BehaviorTrace {
    BehaviorTrace::new(points).unwrap()
}
