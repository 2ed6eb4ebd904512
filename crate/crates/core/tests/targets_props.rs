//! Cross-cutting checks on every shipped target family.

mod common;

use common::random_vector;
use gsmvi::dsl;
use gsmvi::targets::{
    make_dsl_target, make_gaussian_target, make_sinh_arcsinh_target, GaussianTargetSpec,
    MeanMode, SinhArcsinhSpec, TargetModel,
};
use gsmvi::GaussianParams;
use gsmvi_oracles::central_diff_gradient;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gauss_spec(dim: usize, c: f64, seed: u64) -> GaussianTargetSpec {
    GaussianTargetSpec {
        dim,
        condition_number: c,
        seed,
        mean_mode: MeanMode::StandardNormalDraw,
    }
}

fn shipped_targets() -> Vec<(String, Box<dyn TargetModel>)> {
    let mut models: Vec<(String, Box<dyn TargetModel>)> = Vec::new();
    for (dim, c) in [(1, 1.0), (3, 10.0), (6, 100.0)] {
        models.push((
            format!("gauss d={dim} c={c}"),
            Box::new(make_gaussian_target(&gauss_spec(dim, c, 7 + dim as u64)).unwrap()),
        ));
    }
    for (s, t) in [(0.0, 1.0), (0.8, 1.0), (0.0, 0.6), (-0.5, 1.4)] {
        models.push((
            format!("sinh s={s} t={t}"),
            Box::new(
                make_sinh_arcsinh_target(&SinhArcsinhSpec {
                    base: gauss_spec(4, 5.0, 19),
                    skewness: s,
                    tail_weight: t,
                })
                .unwrap(),
            ),
        ));
    }
    for (text, dim) in [
        ("-0.5*dot(theta,theta)", 3),
        ("-0.25*theta[0]^4 - 0.5*theta[1]^2", 2),
        ("sum(-(theta[i]^2)/2) - 0.1*sinh(theta[0])", 4),
    ] {
        models.push((
            format!("dsl {text}"),
            Box::new(make_dsl_target(dsl::parse(text, dim).unwrap(), dim).unwrap()),
        ));
    }
    models
}

#[test]
fn every_target_score_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for (name, model) in shipped_targets() {
        for case in 0..100 {
            let point = random_vector(model.dim(), 1.2, &mut rng);
            let analytic = model.grad_log_density(&point).unwrap();
            let numeric =
                central_diff_gradient(|x| model.log_density(x).unwrap(), &point, 1e-5);
            for i in 0..model.dim() {
                let scale = analytic[i].abs().max(1.0);
                let err = (analytic[i] - numeric[i]).abs() / scale;
                assert!(
                    err <= 1e-6,
                    "{name} case {case} coord {i}: {} vs {} (rel {err})",
                    analytic[i],
                    numeric[i]
                );
            }
        }
    }
}

#[test]
fn gaussian_sampler_moments_recover_the_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for (dim, c) in [(2usize, 1.0), (4, 10.0), (8, 100.0)] {
        let target = make_gaussian_target(&gauss_spec(dim, c, 99 + dim as u64)).unwrap();
        let n = 100_000;
        let mut mean = DVector::zeros(dim);
        let mut second = DMatrix::zeros(dim, dim);
        for _ in 0..n {
            let x = target.exact_sample(&mut rng).unwrap();
            mean += &x;
            second += &x * x.transpose();
        }
        mean /= n as f64;
        let cov = second / n as f64 - &mean * mean.transpose();
        let reconstructed = GaussianParams::new(mean, cov).unwrap();
        let kl = target.params().kl(&reconstructed).unwrap();
        assert!(
            kl <= 0.01 * dim as f64,
            "d={dim} c={c}: moment-reconstruction KL {kl}"
        );
    }
}

#[test]
fn skewness_parameter_sets_the_sample_skew_sign() {
    for s in [0.9, -0.9] {
        let target = make_sinh_arcsinh_target(&SinhArcsinhSpec {
            base: GaussianTargetSpec {
                dim: 1,
                condition_number: 1.0,
                seed: 5,
                mean_mode: MeanMode::Zero,
            },
            skewness: s,
            tail_weight: 1.0,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| target.exact_sample(&mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let m2 = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let m3 = draws.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
        let skew = m3 / m2.powf(1.5);
        assert!(
            skew.signum() == s.signum() && skew.abs() > 0.1,
            "s={s}: sample skewness {skew}"
        );
    }
}
