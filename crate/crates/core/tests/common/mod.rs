//! Shared generators for the integration suites.

use gsmvi::GaussianParams;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_vector(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Random PD covariance with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_covariance(dim: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = random_orthogonal(dim, rng);
    let eig = DVector::from_fn(dim, |_, _| lo + (hi - lo) * rng.random::<f64>());
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

pub fn random_gaussian(dim: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> GaussianParams {
    let mean = random_vector(dim, 1.0, rng);
    GaussianParams::new(mean, random_covariance(dim, lo, hi, rng)).unwrap()
}
