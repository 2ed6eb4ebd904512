//! The multivariate Gaussian variational family.
//!
//! [`GaussianParams`] carries the state `(μ, Σ)` that both optimizers evolve,
//! together with the lower-triangular Cholesky factor `L` (`L·Lᵀ = Σ`). All
//! density, score and sampling routines go through the factor; the explicit
//! inverse of `Σ` is never formed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_6;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("covariance lost positive definiteness")]
    NotPositiveDefinite,
    #[error("dimension must be at least 1")]
    EmptyDimension,
}

/// Parameters `w = (μ, Σ)` of a multivariate normal `q_w(θ) = N(μ, Σ)`.
///
/// Immutable after construction. The covariance is re-symmetrized as
/// `(Σ + Σᵀ)/2` before factorization to absorb rounding drift, and the
/// factorization itself is the positive-definiteness witness: construction
/// fails with [`GaussianError::NotPositiveDefinite`] if it breaks down.
#[derive(Debug, Clone)]
pub struct GaussianParams {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl GaussianParams {
    /// Builds the state from a mean and covariance.
    ///
    /// The covariance is re-symmetrized and factorized; the factor is
    /// recomputed from scratch (O(d³)) rather than maintained incrementally.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, GaussianError> {
        let d = mean.len();
        if d == 0 {
            return Err(GaussianError::EmptyDimension);
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(GaussianError::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(GaussianError::NonFinite { what: "mean" });
        }
        if covariance.iter().any(|x| !x.is_finite()) {
            return Err(GaussianError::NonFinite { what: "covariance" });
        }
        let sym = (&covariance + covariance.transpose()) * 0.5;
        let chol = nalgebra::linalg::Cholesky::new(sym.clone())
            .ok_or(GaussianError::NotPositiveDefinite)?;
        Ok(Self {
            mean,
            covariance: sym,
            chol: chol.unpack(),
        })
    }

    /// Like [`GaussianParams::new`], but on factorization failure retries with
    /// `Σ + λI` for `λ = 1e-10·tr(Σ)/d`, doubling `λ` up to three times.
    ///
    /// Opt-in only; the plain constructor keeps failures visible.
    pub fn new_with_jitter(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self, GaussianError> {
        match Self::new(mean.clone(), covariance.clone()) {
            Err(GaussianError::NotPositiveDefinite) => {
                let d = covariance.nrows();
                let base = 1e-10 * covariance.trace() / d as f64;
                let mut lambda = base.abs().max(f64::MIN_POSITIVE);
                for _ in 0..=3 {
                    let jittered = &covariance + DMatrix::identity(d, d) * lambda;
                    if let Ok(q) = Self::new(mean.clone(), jittered) {
                        return Ok(q);
                    }
                    lambda *= 2.0;
                }
                Err(GaussianError::NotPositiveDefinite)
            }
            other => other,
        }
    }

    /// The standard normal `N(0, I_d)`.
    pub fn standard(dim: usize) -> Result<Self, GaussianError> {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower-triangular factor with `L·Lᵀ = Σ`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    fn check_point(&self, point: &DVector<f64>) -> Result<(), GaussianError> {
        if point.len() != self.dim() {
            return Err(GaussianError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(GaussianError::NonFinite { what: "point" });
        }
        Ok(())
    }

    /// `log N(point; μ, Σ)` via a triangular solve and the factor's
    /// log-determinant.
    pub fn log_density(&self, point: &DVector<f64>) -> Result<f64, GaussianError> {
        self.check_point(point)?;
        let diff = point - &self.mean;
        let y = self
            .chol
            .solve_lower_triangular(&diff)
            .ok_or(GaussianError::NotPositiveDefinite)?;
        let quad = y.norm_squared();
        let log_det: f64 = 2.0 * self.chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(-0.5 * (self.dim() as f64 * LN_2PI + log_det + quad))
    }

    /// The score `∇_θ log q(θ) = −Σ⁻¹(θ − μ)`, computed with two triangular
    /// solves.
    pub fn score(&self, point: &DVector<f64>) -> Result<DVector<f64>, GaussianError> {
        self.check_point(point)?;
        let diff = point - &self.mean;
        Ok(-self.solve_covariance(&diff))
    }

    /// Solves `Σ x = b` through the factor.
    pub(crate) fn solve_covariance(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self
            .chol
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal");
        self.chol.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Draws `θ = μ + L·z`, with `z` filled by `d` standard-normal draws
    /// taken from `rng` in coordinate order `0..d`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        &self.mean + &self.chol * z
    }

    /// `KL(self ‖ other)` in closed form:
    /// `½(tr[Σ₁⁻¹Σ₀] + (μ₁−μ₀)ᵀΣ₁⁻¹(μ₁−μ₀) − d + log|Σ₁|/|Σ₀|)`.
    pub fn kl(&self, other: &GaussianParams) -> Result<f64, GaussianError> {
        if self.dim() != other.dim() {
            return Err(GaussianError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        // tr(Σ₁⁻¹Σ₀) = ‖L₁⁻¹ L₀‖_F²
        let a = other
            .chol
            .solve_lower_triangular(&self.chol)
            .ok_or(GaussianError::NotPositiveDefinite)?;
        let trace_term = a.iter().map(|v| v * v).sum::<f64>();
        let diff = &self.mean - &other.mean;
        let y = other
            .chol
            .solve_lower_triangular(&diff)
            .ok_or(GaussianError::NotPositiveDefinite)?;
        let mahal = y.norm_squared();
        let log_det = |m: &DMatrix<f64>| 2.0 * m.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_ratio = log_det(&other.chol) - log_det(&self.chol);
        Ok(0.5 * (trace_term + mahal - self.dim() as f64 + log_ratio))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gauss_1d(mean: f64, var: f64) -> GaussianParams {
        GaussianParams::new(DVector::from_vec(vec![mean]), DMatrix::from_vec(1, 1, vec![var]))
            .unwrap()
    }

    #[test]
    fn log_density_standard_normal_at_mode() {
        let q = GaussianParams::standard(1).unwrap();
        let x = DVector::zeros(1);
        assert_abs_diff_eq!(q.log_density(&x).unwrap(), -0.918_938_5, epsilon = 1e-6);
    }

    #[test]
    fn log_density_isotropic_2d() {
        let q = GaussianParams::standard(2).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert_abs_diff_eq!(q.log_density(&x).unwrap(), -2.837_877_1, epsilon = 1e-6);
    }

    #[test]
    fn log_density_scalar_shifted() {
        // N(1, 4) at 3: -0.5 log 2π - 0.5 log 4 - 0.5
        let q = gauss_1d(1.0, 4.0);
        let x = DVector::from_vec(vec![3.0]);
        let expected = -0.5 * LN_2PI - 0.5 * 4.0f64.ln() - 0.5;
        assert_abs_diff_eq!(q.log_density(&x).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, -2.112_085_7, epsilon = 1e-6);
    }

    #[test]
    fn score_identity_covariance_negates_point() {
        let q = GaussianParams::standard(3).unwrap();
        let p = DVector::from_vec(vec![0.7, -1.3, 2.0]);
        let s = q.score(&p).unwrap();
        assert_abs_diff_eq!(s, -p, epsilon = 1e-14);
    }

    #[test]
    fn score_vanishes_at_mean() {
        let q = GaussianParams::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_vec(2, 2, vec![2.0, 0.3, 0.3, 1.5]),
        )
        .unwrap();
        let s = q.score(q.mean()).unwrap();
        assert!(s.norm() <= 1e-14);
    }

    #[test]
    fn score_diagonal_componentwise() {
        let q = GaussianParams::new(
            DVector::zeros(2),
            DMatrix::from_vec(2, 2, vec![4.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let s = q.score(&DVector::from_vec(vec![2.0, 3.0])).unwrap();
        assert_abs_diff_eq!(s[0], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s[1], -3.0, epsilon = 1e-14);
    }

    #[test]
    fn sample_is_affine_in_factor() {
        // μ = 5, chol = 2, z = 1 → 7; reproduce by pinning the rng draw.
        let q = gauss_1d(5.0, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: f64 = rng.sample(StandardNormal);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = q.sample(&mut rng);
        assert_abs_diff_eq!(x[0], 5.0 + 2.0 * z, epsilon = 1e-14);
    }

    #[test]
    fn sample_mean_law_of_large_numbers() {
        let q = GaussianParams::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut acc = DVector::zeros(2);
        for _ in 0..n {
            acc += q.sample(&mut rng);
        }
        acc /= n as f64;
        assert!((acc[0] - 1.0).abs() < 0.02, "mean[0] = {}", acc[0]);
        assert!((acc[1] - 2.0).abs() < 0.02, "mean[1] = {}", acc[1]);
    }

    #[test]
    fn kl_identical_is_zero() {
        let q = GaussianParams::new(
            DVector::from_vec(vec![0.4, -0.1]),
            DMatrix::from_vec(2, 2, vec![1.3, 0.2, 0.2, 0.9]),
        )
        .unwrap();
        assert!(q.kl(&q).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn kl_mean_shift() {
        let q0 = gauss_1d(0.0, 1.0);
        let q1 = gauss_1d(1.0, 1.0);
        assert_abs_diff_eq!(q0.kl(&q1).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn kl_variance_mismatch() {
        let q0 = gauss_1d(0.0, 1.0);
        let q1 = gauss_1d(0.0, 4.0);
        let expected = 0.5 * (0.25 + 4.0f64.ln() - 1.0);
        assert_abs_diff_eq!(q0.kl(&q1).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.318_147_2, epsilon = 1e-6);
    }

    #[test]
    fn rejects_non_positive_definite() {
        let err = GaussianParams::new(
            DVector::zeros(2),
            DMatrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, GaussianError::NotPositiveDefinite));
    }

    #[test]
    fn jitter_recovers_borderline_matrix() {
        // Rank-deficient: plain construction fails, jitter succeeds.
        let cov = DMatrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        assert!(GaussianParams::new(DVector::zeros(2), cov.clone()).is_err());
        let q = GaussianParams::new_with_jitter(DVector::zeros(2), cov).unwrap();
        assert!(q.chol()[(0, 0)] > 0.0);
    }

    #[test]
    fn rejects_dimension_mismatch_and_non_finite() {
        let q = GaussianParams::standard(2).unwrap();
        assert!(matches!(
            q.log_density(&DVector::zeros(3)),
            Err(GaussianError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            q.score(&DVector::from_vec(vec![f64::NAN, 0.0])),
            Err(GaussianError::NonFinite { .. })
        ));
    }

    #[test]
    fn invariants_hold_after_construction() {
        let cov = DMatrix::from_vec(2, 2, vec![2.0, 0.5, 0.5, 1.0]);
        let q = GaussianParams::new(DVector::zeros(2), cov).unwrap();
        let asym = (q.covariance() - q.covariance().transpose()).amax();
        assert!(asym <= 1e-12 * q.covariance().amax());
        let recon = q.chol() * q.chol().transpose();
        let err = (&recon - q.covariance()).norm() / q.covariance().norm();
        assert!(err <= 1e-10, "factor reconstruction error {err}");
    }
}
