//! Oracle checks shared by the focused test files and the acceptance run.
//! Each returns the worst error it saw.

use nalgebra::{DMatrix, DVector};
use pose_core::memory::{is_similar, Admission, GuidanceMemory, MemoryConfig};
use pose_core::metrics::{mmd_squared, KernelConfig};
use pose_core::optim::{
    conjugate_gradient, diversity_surrogate, fisher_vector_product, ppo_clip_objective,
    score_function_gradient, value_loss, weighted_log_likelihood, Sample,
};
use pose_core::policy::{ActionDistribution, Head, PolicyArch, PolicyParams, ValueParams};
use pose_core::{Action, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const H: f64 = 1e-5;

/// `(worst absolute error, seconds)` over `pairs` random point-set pairs.
pub fn mmd_vs_double_sum(pairs: usize) -> (f64, f64) {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let dim = rng.gen_range(1..=4);
        let x = random_points(rng.gen_range(1..=50), dim, &mut rng);
        let y = random_points(rng.gen_range(1..=50), dim, &mut rng);
        let h = rng.gen_range(0.2..3.0);
        let got = mmd_squared(&trace(&x), &trace(&y), &KernelConfig::fixed(h)).unwrap();
        worst = worst.max((got - brute_mmd(&x, &y, h).max(0.0)).abs());
    }
    (worst, start.elapsed().as_secs_f64())
}

pub fn samples_for(policy: &PolicyParams, rng: &mut ChaCha8Rng, n: usize, clip: f64) -> Vec<Sample> {
    let head = policy.arch().head;
    let mut out = Vec::new();
    while out.len() < n {
        let obs = vec![normal(rng), normal(rng)];
        let action = random_action(head, rng);
        let lp = policy.forward(&obs).unwrap().log_prob(&action).unwrap();
        let old = lp + 0.3 * normal(rng);
        let ratio = (lp - old).exp();
        // Stay away from the kinks of the clipped objective.
        if (ratio - (1.0 + clip)).abs() < 1e-3 || (ratio - (1.0 - clip)).abs() < 1e-3 {
            continue;
        }
        out.push(Sample {
            obs,
            action,
            advantage: normal(rng),
            old_log_prob: old,
            target: normal(rng),
            traj: 0,
        });
    }
    out
}

fn archs() -> [PolicyArch; 2] {
    [small_categorical(), small_gaussian()]
}

pub fn clip_objective_error(seeds: u64) -> f64 {
    let mut worst = 0.0f64;
    for arch in archs() {
        assert!(arch.num_params() <= 50);
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let policy = random_policy(arch.clone(), &mut rng);
            let samples = samples_for(&policy, &mut rng, 12, 0.2);
            let (_, grad) = ppo_clip_objective(&policy, &samples, 0.2).unwrap();
            let fd = finite_diff(
                |t| ppo_clip_objective(&policy.with_theta(t.to_vec()), &samples, 0.2).unwrap().0,
                &policy.theta,
                H,
            );
            worst = worst.max(rel_err(&grad, &fd));
        }
    }
    worst
}

pub fn penalty_error(seeds: u64) -> f64 {
    let mut worst = 0.0f64;
    for arch in archs() {
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let policy = random_policy(arch.clone(), &mut rng);
            let batch = random_batch(arch.head, 4, 5, &mut rng);
            let weights: Vec<f64> = (0..batch.len()).map(|_| rng.gen_range(0.0..2.0)).collect();
            let grad = score_function_gradient(&policy, &batch, &weights).unwrap();
            let fd = finite_diff(
                |t| weighted_log_likelihood(&policy.with_theta(t.to_vec()), &batch, &weights).unwrap(),
                &policy.theta,
                H,
            );
            worst = worst.max(rel_err(&grad, &fd));
        }
    }
    worst
}

pub fn diversity_surrogate_error(seeds: u64) -> f64 {
    let mut worst = 0.0f64;
    for arch in archs() {
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
            let base = random_policy(arch.clone(), &mut rng);
            let theta: Vec<f64> = base.theta.iter().map(|t| t + 0.1 * normal(&mut rng)).collect();
            let policy = base.with_theta(theta);
            let batch = random_batch(arch.head, 3, 4, &mut rng);
            let weights: Vec<f64> = (0..batch.len()).map(|_| normal(&mut rng)).collect();
            let (_, grad) = diversity_surrogate(&policy, &base, &batch, &weights).unwrap();
            let fd = finite_diff(
                |t| {
                    diversity_surrogate(&policy.with_theta(t.to_vec()), &base, &batch, &weights)
                        .unwrap()
                        .0
                },
                &policy.theta,
                H,
            );
            worst = worst.max(rel_err(&grad, &fd));
        }
    }
    worst
}

pub fn value_loss_error(seeds: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let mut value = ValueParams::init(2, &[5], &mut rng);
        value.theta.iter_mut().for_each(|t| *t = 0.5 * normal(&mut rng));
        assert!(value.theta.len() <= 50);
        let policy = random_policy(small_categorical(), &mut rng);
        let samples = samples_for(&policy, &mut rng, 10, 0.2);
        let (_, grad) = value_loss(&value, &samples).unwrap();
        let fd = finite_diff(
            |t| {
                let mut v = value.clone();
                v.theta = t.to_vec();
                value_loss(&v, &samples).unwrap().0
            },
            &value.theta,
            H,
        );
        worst = worst.max(rel_err(&grad, &fd));
    }
    worst
}

/// ∇θ log π(a|s) by central differences of the log-probability.
fn fd_score(policy: &PolicyParams, obs: &[f64], action: &Action) -> Vec<f64> {
    finite_diff(
        |t| policy.with_theta(t.to_vec()).forward(obs).unwrap().log_prob(action).unwrap(),
        &policy.theta,
        1e-6,
    )
}

/// Explicit Fisher for a categorical policy: mean over states of
/// `Σ_a p(a|s) ∇log p ∇log pᵀ`, enumerating actions.
fn categorical_fisher(policy: &PolicyParams, states: &[Vec<f64>]) -> DMatrix<f64> {
    let n = policy.len();
    let mut f = DMatrix::zeros(n, n);
    for s in states {
        let probs = policy.forward(s).unwrap().probs().unwrap();
        for (a, p) in probs.iter().enumerate() {
            let g = DVector::from_vec(fd_score(policy, s, &Action::Discrete(a)));
            f += &g * g.transpose() * (*p / states.len() as f64);
        }
    }
    f
}

/// Explicit Fisher for a diagonal Gaussian through the Jacobian of
/// `(mean, log_std)` and the closed-form output metric `diag(1/σ², 2)`.
fn gaussian_fisher(policy: &PolicyParams, states: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    let n = policy.len();
    let mut f = DMatrix::zeros(n, n);
    for s in states {
        let outputs = |t: &[f64]| -> Vec<f64> {
            match policy.with_theta(t.to_vec()).forward(s).unwrap() {
                ActionDistribution::Gaussian { mean, log_std } => mean.into_iter().chain(log_std).collect(),
                _ => unreachable!(),
            }
        };
        let base = outputs(&policy.theta);
        for k in 0..2 * d {
            let row = DVector::from_vec(finite_diff(|t| outputs(t)[k], &policy.theta, 1e-6));
            let metric = if k < d { (-2.0 * base[d + k]).exp() } else { 2.0 };
            f += &row * row.transpose() * (metric / states.len() as f64);
        }
    }
    f
}

/// Worst absolute entry error of `F·v` over categorical and Gaussian
/// policies with at most 20 parameters.
pub fn fvp_error(seeds: u64) -> f64 {
    let cat = PolicyArch::new(2, vec![3], Head::Categorical(2));
    let gauss = PolicyArch::new(2, vec![2], Head::Gaussian(2));
    assert!(cat.num_params() <= 20 && gauss.num_params() <= 20);
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        for arch in [&cat, &gauss] {
            let policy = random_policy(arch.clone(), &mut rng);
            let states: Vec<Vec<f64>> = (0..5).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
            let v = DVector::from_fn(policy.len(), |_, _| normal(&mut rng));
            let fisher = match arch.head {
                Head::Categorical(_) => categorical_fisher(&policy, &states),
                Head::Gaussian(d) => gaussian_fisher(&policy, &states, d),
            };
            let expected = fisher * &v;
            let got = fisher_vector_product(&policy, &states, v.as_slice(), 0.0).unwrap();
            worst = worst.max((DVector::from_vec(got) - expected).amax());
        }
    }
    worst
}

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| normal(rng));
    &b.transpose() * &b / n as f64 + DMatrix::identity(n, n) * 0.5
}

pub struct CgReport {
    pub worst_residual: f64,
    pub worst_diff: f64,
    pub max_iterations: usize,
}

/// Random 20×20 SPD systems solved by CG against a Cholesky solve.
pub fn cg_vs_dense(systems: u64) -> CgReport {
    let mut r = CgReport {
        worst_residual: 0.0,
        worst_diff: 0.0,
        max_iterations: 0,
    };
    for seed in 0..systems {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(20, &mut rng);
        let g = DVector::from_fn(20, |_, _| normal(&mut rng));
        let sol = conjugate_gradient(
            |v| (&a * DVector::from_column_slice(v)).as_slice().to_vec(),
            g.as_slice(),
            20,
            1e-12,
        );
        let x = DVector::from_column_slice(&sol.x);
        let direct = a.clone().cholesky().unwrap().solve(&g);
        r.worst_residual = r.worst_residual.max((&g - &a * &x).norm() / g.norm());
        r.worst_diff = r.worst_diff.max((&x - &direct).amax());
        r.max_iterations = r.max_iterations.max(sol.iterations);
    }
    r
}

fn memory_config(rng: &mut ChaCha8Rng) -> MemoryConfig {
    MemoryConfig {
        capacity: rng.gen_range(1..12),
        similarity_radius: rng.gen_range(0.5..4.0),
        reanchor_on_improvement: rng.gen_bool(0.5),
    }
}

pub fn random_memory_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
    let len = rng.gen_range(1..15);
    let mut p = vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
    let positions = (0..len)
        .map(|_| {
            p[0] += rng.gen_range(-1.0..1.0);
            p[1] += rng.gen_range(-1.0..1.0);
            p.clone()
        })
        .collect();
    let ret = [0.0, 2.0, 4.0, 10.0][rng.gen_range(0..4)] + rng.gen_range(0..3) as f64;
    Trajectory::from_positions(positions, ret)
}

/// Offers `count` random trajectories to a randomly configured memory and
/// returns the invariant violations seen (empty when none).
pub fn memory_violations(seed: u64, count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = memory_config(&mut rng);
    let goal = rng.gen_bool(0.5).then(|| vec![5.0, 5.0]);
    let kcfg = KernelConfig::default();
    let mut mem = GuidanceMemory::new(cfg, goal);
    let mut best = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    for i in 0..count {
        let t = random_memory_trajectory(&mut rng);
        let before = mem.keys();
        let before_anchor = mem.anchor().map(<[f64]>::to_vec);
        let outcome = mem.try_admit(&t, &kcfg).unwrap();
        if mem.len() > mem.capacity() {
            bad.push(format!("seed {seed} step {i}: capacity exceeded"));
        }
        let anchor = mem.anchor().unwrap().to_vec();
        if !mem
            .entries()
            .iter()
            .all(|e| is_similar(e.embedding(), &anchor, mem.similarity_radius()).unwrap())
        {
            bad.push(format!("seed {seed} step {i}: entry outside similarity radius"));
        }
        let keys = mem.keys();
        if keys.windows(2).any(|w| w[1].is_better_than(&w[0])) {
            bad.push(format!("seed {seed} step {i}: entries out of order"));
        }
        if mem.entries()[0].embedding() != &anchor[..] {
            bad.push(format!("seed {seed} step {i}: anchor is not the best entry"));
        }
        if before.first().map_or(false, |b| b.is_better_than(&keys[0])) {
            bad.push(format!("seed {seed} step {i}: best entry got worse"));
        }
        let same_region = before_anchor.as_deref() == Some(&anchor[..]);
        if same_region && keys.len() == before.len() && keys.iter().zip(&before).any(|(k, b)| b.is_better_than(k)) {
            bad.push(format!("seed {seed} step {i}: {outcome:?} lowered a retained key"));
        }
        if keys[0].ret < best {
            bad.push(format!("seed {seed} step {i}: best return fell from {best} to {}", keys[0].ret));
        }
        best = keys[0].ret;
        let admitted = !matches!(outcome, Admission::RejectedDissimilar | Admission::RejectedWorse);
        if admitted && !mem.entries().iter().any(|e| e.traj() == &t) {
            bad.push(format!("seed {seed} step {i}: admitted trajectory missing"));
        }
    }
    bad
}
