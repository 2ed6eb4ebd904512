//! Property suites for the Gaussian family.

mod common;

use common::{random_gaussian, random_vector};
use gsmvi::GaussianParams;
use gsmvi_oracles::central_diff_gradient;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn score_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..200 {
        let dim = 1 + case % 8;
        let q = random_gaussian(dim, 0.3, 4.0, &mut rng);
        let point = random_vector(dim, 2.0, &mut rng);
        let analytic = q.score(&point).unwrap();
        let numeric = central_diff_gradient(|x| q.log_density(x).unwrap(), &point, 1e-5);
        for i in 0..dim {
            let scale = analytic[i].abs().max(1.0);
            let err = (analytic[i] - numeric[i]).abs() / scale;
            assert!(
                err <= 1e-6,
                "case {case} dim {dim} coord {i}: {} vs {} (rel {err})",
                analytic[i],
                numeric[i]
            );
        }
    }
}

#[test]
fn kl_is_nonnegative_and_zero_on_self() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..1000 {
        let dim = 1 + case % 8;
        let q0 = random_gaussian(dim, 0.2, 5.0, &mut rng);
        let q1 = random_gaussian(dim, 0.2, 5.0, &mut rng);
        let kl = q0.kl(&q1).unwrap();
        assert!(kl >= -1e-12, "case {case}: negative KL {kl}");
        assert!(q0.kl(&q0).unwrap().abs() <= 1e-12);
    }
}

#[test]
fn score_has_zero_mean_under_its_own_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let q = random_gaussian(4, 0.5, 3.0, &mut rng);
    let n = 100_000;
    let mut acc = nalgebra::DVector::zeros(4);
    for _ in 0..n {
        let theta = q.sample(&mut rng);
        acc += q.score(&theta).unwrap();
    }
    acc /= n as f64;
    // Var[score] = Σ⁻¹, so the sample mean concentrates at 3·√(tr Σ⁻¹/n)
    let precision_trace = q
        .covariance()
        .clone()
        .try_inverse()
        .unwrap()
        .trace();
    let bound = 3.0 * (precision_trace / n as f64).sqrt();
    assert!(acc.norm() <= bound, "norm {} bound {bound}", acc.norm());
}
