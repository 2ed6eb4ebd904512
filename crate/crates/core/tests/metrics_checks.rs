//! Statistical invariants of the empirical forward-KL estimator.

mod common;

use common::{random_covariance, random_gaussian, random_vector};
use gsmvi::metrics::{forward_kl_mean, ReferenceSampleSet};
use gsmvi::targets::GaussianTarget;
use gsmvi::GaussianParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fkl_tracks_the_exact_gaussian_kl() {
    let mut rng = ChaCha8Rng::seed_from_u64(1212);
    for case in 0..100 {
        let dim = 1 + case % 5;
        let target_params = random_gaussian(dim, 0.5, 2.0, &mut rng);
        let target = GaussianTarget::from_params(target_params.clone());
        let refs = ReferenceSampleSet::generate(&target, "t", 1000, 42 + case as u64).unwrap();
        // a randomly perturbed q: far enough to be a real mismatch, close
        // enough that the 1000-sample error estimate is trustworthy
        let q_mean = target_params.mean() + random_vector(dim, 0.4, &mut rng);
        let q_cov =
            target_params.covariance() * 0.6 + random_covariance(dim, 0.2, 0.8, &mut rng);
        let q = GaussianParams::new(q_mean, q_cov).unwrap();

        let est = forward_kl_mean(&refs, &target, &q).unwrap();
        let exact = target_params.kl(&q).unwrap();

        let mut var = 0.0;
        for point in refs.samples() {
            let r = target.params().log_density(point).unwrap() - q.log_density(point).unwrap();
            var += (r - est) * (r - est);
        }
        var /= refs.len() as f64 - 1.0;
        let se = (var / refs.len() as f64).sqrt();

        assert!(
            (est - exact).abs() <= 3.0 * se,
            "case {case}: est {est} exact {exact} se {se}"
        );
        // true forward KL is nonnegative; the estimate may only dip below
        // zero within Monte-Carlo error
        assert!(est >= -3.0 * se, "case {case}: est {est} below -3·se");
    }
}
