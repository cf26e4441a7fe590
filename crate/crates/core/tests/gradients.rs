//! Analytic gradients against central finite differences and explicit
//! Fisher matrices.

mod common;

use common::checks;
use common::*;
use pose_core::optim::{diversity_surrogate, fisher_vector_product, mean_entropy, score_function_gradient};
use pose_core::policy::Head;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 100;
const TOL: f64 = 1e-4;

#[test]
fn clip_objective_matches_finite_differences() {
    let e = checks::clip_objective_error(SEEDS);
    assert!(e < TOL, "rel err {e}");
}

#[test]
fn guidance_penalty_matches_finite_differences() {
    let e = checks::penalty_error(SEEDS);
    assert!(e < TOL, "rel err {e}");
}

#[test]
fn diversity_surrogate_matches_finite_differences() {
    let e = checks::diversity_surrogate_error(SEEDS);
    assert!(e < TOL, "rel err {e}");
}

#[test]
fn value_loss_matches_finite_differences() {
    let e = checks::value_loss_error(SEEDS);
    assert!(e < TOL, "rel err {e}");
}

#[test]
fn fvp_matches_explicit_fisher() {
    let e = checks::fvp_error(SEEDS);
    assert!(e < 1e-6, "abs err {e}");
}

#[test]
fn entropy_gradient_matches_finite_differences() {
    for arch in [small_categorical(), small_gaussian()] {
        for seed in 0..SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let policy = random_policy(arch.clone(), &mut rng);
            let samples = checks::samples_for(&policy, &mut rng, 8, 0.2);
            let (_, grad) = mean_entropy(&policy, &samples).unwrap();
            let fd = finite_diff(
                |t| mean_entropy(&policy.with_theta(t.to_vec()), &samples).unwrap().0,
                &policy.theta,
                1e-5,
            );
            let e = rel_err(&grad, &fd);
            assert!(e < TOL, "seed {seed}: rel err {e}");
        }
    }
}

#[test]
fn diversity_surrogate_at_base_equals_score_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = random_policy(small_categorical(), &mut rng);
    let batch = random_batch(Head::Categorical(4), 3, 6, &mut rng);
    let weights = [0.5, -1.0, 0.25];
    let (value, grad) = diversity_surrogate(&base, &base, &batch, &weights).unwrap();
    let expected = score_function_gradient(&base, &batch, &weights).unwrap();
    assert!(rel_err(&grad, &expected) < 1e-12);
    // Every ratio is one.
    let sum: f64 = weights.iter().map(|w| w * 6.0).sum();
    assert!((value - sum).abs() < 1e-12);
}

#[test]
fn fvp_is_symmetric_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let policy = random_policy(small_categorical(), &mut rng);
    let states: Vec<Vec<f64>> = (0..8).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for _ in 0..50 {
        let u: Vec<f64> = (0..policy.len()).map(|_| normal(&mut rng)).collect();
        let w: Vec<f64> = (0..policy.len()).map(|_| normal(&mut rng)).collect();
        let fu = fisher_vector_product(&policy, &states, &u, 0.0).unwrap();
        let fw = fisher_vector_product(&policy, &states, &w, 0.0).unwrap();
        assert!((dot(&w, &fu) - dot(&u, &fw)).abs() < 1e-10);
        assert!(dot(&u, &fu) >= -1e-12);
        let damped = fisher_vector_product(&policy, &states, &u, 0.1).unwrap();
        for ((d, f), ui) in damped.iter().zip(&fu).zip(&u) {
            assert!((d - f - 0.1 * ui).abs() < 1e-12);
        }
    }
}
