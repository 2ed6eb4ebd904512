//! Target distributions: unnormalized log densities with gradients and,
//! where available, exact samplers.
//!
//! Three families cover the synthetic studies:
//!
//! * dense-covariance Gaussians with a prescribed condition number,
//! * sinh-arcsinh transforms of those Gaussians (skewness `s`, tail
//!   weight `t`),
//! * user programs in the [`crate::dsl`] expression language (unnormalized;
//!   no sampler).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dsl::{self, DslError, ExprAst};
use crate::gaussian::{GaussianError, GaussianParams};

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("invalid target spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

/// What the fitting algorithms may query: an unnormalized log density
/// `log p(θ, x)` and its score `g = ∇_θ log p(θ, x)`.
///
/// `exact_sample` is present only for targets we can draw from directly;
/// `normalizer_known` says whether `log_density` includes the normalizing
/// constant (forward-KL estimation requires it).
pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, point: &DVector<f64>) -> Result<f64, TargetError>;
    fn grad_log_density(&self, point: &DVector<f64>) -> Result<DVector<f64>, TargetError>;
    fn exact_sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>>;
    fn normalizer_known(&self) -> bool;
}

/// How the target mean is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    Zero,
    /// A seeded standard-normal draw, so mean fitting is nontrivial.
    StandardNormalDraw,
}

/// Recipe for a Gaussian target with covariance eigenvalues log-spaced on
/// `[0.1, 0.1·c]` (endpoints exact) in a seeded random orthogonal basis.
#[derive(Debug, Clone)]
pub struct GaussianTargetSpec {
    pub dim: usize,
    pub condition_number: f64,
    pub seed: u64,
    pub mean_mode: MeanMode,
}

/// A multivariate normal target; fully normalized, exactly samplable.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    params: GaussianParams,
}

impl GaussianTarget {
    /// Wraps explicit parameters as a target.
    pub fn from_params(params: GaussianParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }
}

/// Seeded Haar-ish random orthogonal matrix: QR of a standard-normal matrix
/// with the sign of each R diagonal entry folded into the matching Q column.
fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim, dim);
    // column-major draw order
    for j in 0..dim {
        for i in 0..dim {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
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

/// Builds the Gaussian target from its spec.
///
/// Σ = QΛQᵀ with Λ_i = 0.1·c^(i/(d−1)); the mean is drawn after Q from the
/// same stream when `mean_mode` asks for it.
pub fn make_gaussian_target(spec: &GaussianTargetSpec) -> Result<GaussianTarget, TargetError> {
    if spec.dim == 0 {
        return Err(TargetError::InvalidSpec("dimension must be >= 1".into()));
    }
    if !spec.condition_number.is_finite() || spec.condition_number < 1.0 {
        return Err(TargetError::InvalidSpec(format!(
            "condition number must be >= 1, got {}",
            spec.condition_number
        )));
    }
    if spec.dim == 1 && spec.condition_number != 1.0 {
        return Err(TargetError::InvalidSpec(
            "a 1-dimensional covariance cannot realize a condition number > 1".into(),
        ));
    }
    let d = spec.dim;
    let c = spec.condition_number;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q = random_orthogonal(d, &mut rng);

    let mut eigenvalues = DVector::zeros(d);
    eigenvalues[0] = 0.1;
    if d > 1 {
        eigenvalues[d - 1] = 0.1 * c;
        for i in 1..d - 1 {
            eigenvalues[i] = 0.1 * c.powf(i as f64 / (d - 1) as f64);
        }
    }
    let covariance = &q * DMatrix::from_diagonal(&eigenvalues) * q.transpose();

    let mean = match spec.mean_mode {
        MeanMode::Zero => DVector::zeros(d),
        MeanMode::StandardNormalDraw => DVector::from_fn(d, |_, _| rng.sample(StandardNormal)),
    };
    Ok(GaussianTarget {
        params: GaussianParams::new(mean, covariance)?,
    })
}

impl TargetModel for GaussianTarget {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn log_density(&self, point: &DVector<f64>) -> Result<f64, TargetError> {
        Ok(self.params.log_density(point)?)
    }

    fn grad_log_density(&self, point: &DVector<f64>) -> Result<DVector<f64>, TargetError> {
        Ok(self.params.score(point)?)
    }

    fn exact_sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        Some(self.params.sample(rng))
    }

    fn normalizer_known(&self) -> bool {
        true
    }
}

/// Sinh-arcsinh transform of a dense Gaussian base; `s = 0, t = 1` is the
/// base distribution itself.
#[derive(Debug, Clone)]
pub struct SinhArcsinhSpec {
    pub base: GaussianTargetSpec,
    pub skewness: f64,
    pub tail_weight: f64,
}

/// Pushforward of `N(μ, Σ)` under the elementwise map
/// `x = sinh((asinh(z) + s)/t)` applied to the correlated draw `z`.
#[derive(Debug, Clone)]
pub struct SinhArcsinhTarget {
    base: GaussianParams,
    skewness: f64,
    tail_weight: f64,
}

impl SinhArcsinhTarget {
    pub fn base(&self) -> &GaussianParams {
        &self.base
    }
}

/// Elementwise `x_i = sinh((asinh(z_i) + s)/t)`; strictly monotone per
/// coordinate for `t > 0`.
pub fn sinh_arcsinh_forward(z: &DVector<f64>, s: f64, t: f64) -> DVector<f64> {
    z.map(|v| ((v.asinh() + s) / t).sinh())
}

/// Inverse of [`sinh_arcsinh_forward`]: `z_i = sinh(t·asinh(x_i) − s)`.
pub fn sinh_arcsinh_inverse(x: &DVector<f64>, s: f64, t: f64) -> DVector<f64> {
    x.map(|v| (t * v.asinh() - s).sinh())
}

// log cosh(u) without overflowing cosh for large |u|
fn ln_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

pub fn make_sinh_arcsinh_target(spec: &SinhArcsinhSpec) -> Result<SinhArcsinhTarget, TargetError> {
    if !spec.tail_weight.is_finite() || spec.tail_weight <= 0.0 {
        return Err(TargetError::InvalidSpec(format!(
            "tail weight must be > 0, got {}",
            spec.tail_weight
        )));
    }
    if !spec.skewness.is_finite() {
        return Err(TargetError::InvalidSpec("skewness must be finite".into()));
    }
    let base = make_gaussian_target(&spec.base)?;
    Ok(SinhArcsinhTarget {
        base: base.params,
        skewness: spec.skewness,
        tail_weight: spec.tail_weight,
    })
}

impl TargetModel for SinhArcsinhTarget {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `log N(z(x); μ, Σ) + Σ_i log(dz_i/dx_i)` with
    /// `z_i = sinh(u_i)`, `u_i = t·asinh(x_i) − s`,
    /// `dz_i/dx_i = t·cosh(u_i)/√(1+x_i²)`.
    fn log_density(&self, point: &DVector<f64>) -> Result<f64, TargetError> {
        let s = self.skewness;
        let t = self.tail_weight;
        let z = sinh_arcsinh_inverse(point, s, t);
        let mut log_jac = 0.0;
        for &x in point.iter() {
            let u = t * x.asinh() - s;
            log_jac += t.ln() + ln_cosh(u) - 0.5 * (1.0 + x * x).ln();
        }
        Ok(self.base.log_density(&z)? + log_jac)
    }

    fn grad_log_density(&self, point: &DVector<f64>) -> Result<DVector<f64>, TargetError> {
        let s = self.skewness;
        let t = self.tail_weight;
        let z = sinh_arcsinh_inverse(point, s, t);
        let base_score = self.base.score(&z)?;
        let mut grad = DVector::zeros(self.dim());
        for (i, &x) in point.iter().enumerate() {
            let u = t * x.asinh() - s;
            let root = (1.0 + x * x).sqrt();
            let dzdx = t * u.cosh() / root;
            grad[i] = dzdx * base_score[i] + t * u.tanh() / root - x / (1.0 + x * x);
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(TargetError::Gaussian(GaussianError::NonFinite {
                what: "sinh-arcsinh gradient",
            }));
        }
        Ok(grad)
    }

    fn exact_sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let z = self.base.sample(rng);
        Some(sinh_arcsinh_forward(&z, self.skewness, self.tail_weight))
    }

    fn normalizer_known(&self) -> bool {
        true
    }
}

/// A user-defined log joint; unnormalized and sampler-free, so monitoring
/// falls back to the negative ELBO.
#[derive(Debug, Clone)]
pub struct DslTarget {
    program: ExprAst,
}

impl DslTarget {
    pub fn program(&self) -> &ExprAst {
        &self.program
    }
}

pub fn make_dsl_target(program: ExprAst, dim: usize) -> Result<DslTarget, TargetError> {
    if dim == 0 {
        return Err(TargetError::InvalidSpec("dimension must be >= 1".into()));
    }
    if program.dim() != dim {
        return Err(TargetError::InvalidSpec(format!(
            "program was parsed for dimension {}, target declared {}",
            program.dim(),
            dim
        )));
    }
    Ok(DslTarget { program })
}

impl TargetModel for DslTarget {
    fn dim(&self) -> usize {
        self.program.dim()
    }

    fn log_density(&self, point: &DVector<f64>) -> Result<f64, TargetError> {
        Ok(dsl::evaluate(&self.program, point)?)
    }

    fn grad_log_density(&self, point: &DVector<f64>) -> Result<DVector<f64>, TargetError> {
        Ok(dsl::differentiate(&self.program, point)?)
    }

    fn exact_sample(&self, _rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        None
    }

    fn normalizer_known(&self) -> bool {
        false
    }
}
