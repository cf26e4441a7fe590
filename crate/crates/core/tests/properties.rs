mod common;

use common::checks;
use common::*;
use pose_core::env::{maps, segments_intersect, Cell, Env, Segment};
use pose_core::memory::{Admission, GuidanceMemory, MemoryConfig};
use pose_core::metrics::{mmd_squared, BehaviorTrace, KernelConfig};
use pose_core::optim::{adapt_sigma, compute_gae, normalize_advantages, PenaltyState};
use pose_core::policy::ActionDistribution;
use pose_core::Action;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point_set(max: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), 1..max)
}

proptest! {
    #[test]
    fn mmd_is_symmetric_nonnegative_and_zero_on_self(
        x in point_set(20, 2),
        y in point_set(20, 2),
        h in 0.1f64..4.0,
    ) {
        let (tx, ty) = (trace(&x), trace(&y));
        for cfg in [KernelConfig::fixed(h), KernelConfig::default()] {
            let a = mmd_squared(&tx, &ty, &cfg).unwrap();
            let b = mmd_squared(&ty, &tx, &cfg).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(mmd_squared(&tx, &tx, &cfg).unwrap() < 1e-12);
        }
    }

    #[test]
    fn subsampling_keeps_endpoints_and_bound(x in point_set(400, 2), k in 2usize..100) {
        let t = trace(&x);
        let s = t.subsampled(k);
        prop_assert_eq!(s.len(), t.len().min(k));
        prop_assert_eq!(s.point(0), t.point(0));
        prop_assert_eq!(s.point(s.len() - 1), t.point(t.len() - 1));
    }

    #[test]
    fn categorical_probabilities_sum_to_one(logits in prop::collection::vec(-30.0f64..30.0, 1..8)) {
        let d = ActionDistribution::Categorical { logits };
        let p = d.probs().unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&q| q >= 0.0));
    }

    #[test]
    fn greedy_is_shift_invariant(
        logits in prop::collection::vec(-10.0f64..10.0, 1..8),
        c in -100.0f64..100.0,
    ) {
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        let a = ActionDistribution::Categorical { logits: logits.clone() }.greedy();
        let b = ActionDistribution::Categorical { logits: shifted }.greedy();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(
        a in prop::collection::vec(-5.0f64..5.0, 4),
        b in prop::collection::vec(-5.0f64..5.0, 4),
        m1 in prop::collection::vec(-3.0f64..3.0, 2),
        m2 in prop::collection::vec(-3.0f64..3.0, 2),
        s1 in prop::collection::vec(-2.0f64..1.0, 2),
        s2 in prop::collection::vec(-2.0f64..1.0, 2),
    ) {
        let p = ActionDistribution::Categorical { logits: a };
        let q = ActionDistribution::Categorical { logits: b };
        prop_assert!(p.kl(&q).unwrap() >= -1e-12);
        prop_assert!(p.kl(&p).unwrap().abs() < 1e-12);
        let g1 = ActionDistribution::Gaussian { mean: m1, log_std: s1 };
        let g2 = ActionDistribution::Gaussian { mean: m2, log_std: s2 };
        prop_assert!(g1.kl(&g2).unwrap() >= -1e-12);
        prop_assert!(g1.kl(&g1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sigma_stays_in_bounds(violations in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], 0..300)) {
        let mut p = PenaltyState::default();
        for v in violations {
            let next = adapt_sigma(p, v);
            prop_assert!(next.sigma >= p.sigma_min && next.sigma <= p.sigma_max);
            if v > 0.0 {
                prop_assert!(next.sigma >= p.sigma);
            } else {
                prop_assert!(next.sigma <= p.sigma);
            }
            p = next;
        }
    }

    #[test]
    fn normalized_advantages_have_zero_mean(mut adv in prop::collection::vec(-100.0f64..100.0, 2..200)) {
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        let var = adv.iter().map(|a| a * a).sum::<f64>() / n;
        prop_assert!(var < 1.0 + 1e-9);
    }

    #[test]
    fn gae_with_zero_lambda_is_td_error(
        rewards in prop::collection::vec(-1.0f64..1.0, 1..30),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rewards.len();
        let values: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dones = vec![false; n];
        dones[n - 1] = true;
        let (adv, targets) = compute_gae(&rewards, &values, &dones, 0.9, 0.0).unwrap();
        for t in 0..n {
            let next = if dones[t] { 0.0 } else { values[t + 1] };
            prop_assert!((adv[t] - (rewards[t] + 0.9 * next - values[t])).abs() < 1e-12);
            prop_assert!((targets[t] - adv[t] - values[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_random_walks_respect_walls(seed in any::<u64>(), map in 0usize..5) {
        let name = ["deceptive25", "kdt25", "deceptive15", "kdt21", "corridor"][map];
        let Env::Grid(mut g) = maps::build(name, 0).unwrap() else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        g.reset();
        let mut steps = 0;
        loop {
            let before = g.position();
            let r = g.step(&Action::Discrete(rng.gen_range(0..4))).unwrap();
            steps += 1;
            let (x, y) = (r.position[0] as i64, r.position[1] as i64);
            prop_assert_ne!(g.cell(x, y), Cell::Wall);
            let moved: f64 = before.iter().zip(&r.position).map(|(a, b)| (a - b).abs()).sum();
            prop_assert!(moved <= 1.0);
            if r.done {
                break;
            }
        }
        prop_assert!(steps <= g.max_steps());
    }

    #[test]
    fn point_walks_never_cross_walls(seed in any::<u64>()) {
        let Env::Point(mut p) = maps::build("point_u", 200).unwrap() else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.reset(seed);
        let (lo, hi) = p.bounds();
        loop {
            let before = p.position();
            let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let r = p.step(&Action::Continuous(a.to_vec())).unwrap();
            let after = r.position.clone();
            let path = Segment::new([before[0], before[1]], [after[0], after[1]]);
            for w in p.walls() {
                prop_assert!(!segments_intersect(&path, w) || before == after);
            }
            for d in 0..2 {
                prop_assert!(after[d] >= lo[d] && after[d] <= hi[d]);
            }
            if r.done {
                break;
            }
        }
    }
}

#[test]
fn memory_invariants_over_ten_thousand_admissions() {
    for seed in 0..10 {
        let bad = checks::memory_violations(seed, 1000);
        assert!(bad.is_empty(), "{bad:?}");
    }
}

#[test]
fn zero_capacity_memory_is_disabled() {
    let mut mem = GuidanceMemory::new(
        MemoryConfig {
            capacity: 0,
            similarity_radius: 1.0,
            reanchor_on_improvement: true,
        },
        None,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let t = checks::random_memory_trajectory(&mut rng);
        assert_eq!(mem.try_admit(&t, &KernelConfig::default()).unwrap(), Admission::Disabled);
    }
    assert!(mem.is_empty());
}

#[test]
fn memory_snapshot_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kcfg = KernelConfig::default();
    let mut mem = GuidanceMemory::new(
        MemoryConfig {
            capacity: 5,
            similarity_radius: 3.0,
            reanchor_on_improvement: true,
        },
        None,
    );
    for _ in 0..200 {
        mem.try_admit(&checks::random_memory_trajectory(&mut rng), &kcfg).unwrap();
    }
    let again = GuidanceMemory::from_text(&mem.to_text(), &kcfg).unwrap();
    assert_eq!(again.to_text(), mem.to_text());
    assert_eq!(again.len(), mem.len());
}

#[test]
fn behavior_trace_rejects_ragged_points() {
    assert!(BehaviorTrace::new(&[vec![0.0, 1.0], vec![1.0]]).is_err());
}
