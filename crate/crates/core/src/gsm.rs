//! Score-matching updates for the Gaussian family.
//!
//! One update takes the current `q₀ = N(μ₀, Σ₀)`, a point `θ` and the target
//! score `g = ∇_θ log p(θ, x)`, and returns the Gaussian closest to `q₀` in
//! `KL(q₀ ‖ ·)` whose own score at `θ` equals `g`. The solution is closed
//! form:
//!
//! * `ε₀ = Σ₀g − μ₀ + θ` measures the constraint violation; `ε₀ = 0` makes
//!   the update a no-op.
//! * `ρ` is the positive root of `ρ(1+ρ) = gᵀΣ₀g + [(μ₀−θ)ᵀg]²`.
//! * `μ = μ₀ + (1+ρ)⁻¹[I − (μ₀−θ)gᵀ/(1+ρ+(μ₀−θ)ᵀg)]·ε₀` (Sherman–Morrison
//!   form of the rank-one-corrected linear solve).
//! * `Σ = Σ₀ + (μ₀−θ)(μ₀−θ)ᵀ − (μ−θ)(μ−θ)ᵀ`, a rank-two correction that
//!   stays positive definite whenever `Σ₀` is.
//!
//! [`gsm_step`] averages `B` independent single-sample updates;
//! [`run_gsm`] iterates steps for a fixed budget and records a metric trace.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gaussian::{GaussianError, GaussianParams};
use crate::metrics::{MetricError, Monitor, TraceRecord};
use crate::targets::{TargetError, TargetModel};

#[derive(Debug, Error)]
pub enum GsmError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("quadratic right-hand side is not finite (r = {r})")]
    NonFiniteQuadratic { r: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("updated covariance lost positive definiteness")]
    LostPositiveDefiniteness { diagnostics: Box<GsmUpdateDiagnostics> },
}

/// Intermediates of one update, kept for inspection and testing.
#[derive(Debug, Clone)]
pub struct GsmUpdateDiagnostics {
    /// Positive root of the update quadratic; equals `gᵀΣ_new g`.
    pub rho: f64,
    /// Constraint violation `Σ₀g − μ₀ + θ` of the incoming parameters.
    pub epsilon0: DVector<f64>,
    pub delta_mu: DVector<f64>,
    pub delta_sigma: DMatrix<f64>,
    /// `‖Σ_new⁻¹(θ − μ_new) + g‖∞`; zero when the score constraint holds
    /// exactly at `θ`.
    pub constraint_residual: f64,
}

/// Run configuration for [`run_gsm`].
#[derive(Debug, Clone)]
pub struct GsmConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub init: GaussianParams,
    pub seed: u64,
    /// Monitor cadence in iterations; 1 observes after every update.
    pub monitor_every: u64,
}

impl GsmConfig {
    pub fn new(init: GaussianParams, iterations: u64, batch_size: usize, seed: u64) -> Self {
        Self {
            iterations,
            batch_size,
            init,
            seed,
            monitor_every: 1,
        }
    }

    pub fn validate(&self) -> Result<(), GsmError> {
        if self.iterations < 1 {
            return Err(GsmError::InvalidConfig("iterations must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(GsmError::InvalidConfig("batch_size must be >= 1"));
        }
        if self.monitor_every < 1 {
            return Err(GsmError::InvalidConfig("monitor_every must be >= 1"));
        }
        Ok(())
    }
}

/// A run abort: the failing iteration plus whatever trace was collected.
#[derive(Debug, Error)]
#[error("run aborted at iteration {iteration}: {source}")]
pub struct GsmRunError {
    pub source: GsmError,
    pub iteration: u64,
    pub partial_trace: Vec<TraceRecord>,
}

/// Solves `ρ(1+ρ) = r` for the positive root, with
/// `r = gᵀΣ₀g + [(μ₀−θ)ᵀg]²`.
///
/// For `r < 1e-8` the equivalent form `2r/(1+√(1+4r))` replaces
/// `(√(1+4r)−1)/2`, which loses digits to cancellation exactly where the
/// method is near convergence.
pub fn solve_rho(
    g: &DVector<f64>,
    q0: &GaussianParams,
    theta: &DVector<f64>,
) -> Result<f64, GsmError> {
    check_dims(q0, theta, g)?;
    let sigma_g = q0.covariance() * g;
    let along = (q0.mean() - theta).dot(g);
    let r = g.dot(&sigma_g) + along * along;
    rho_from_rhs(r)
}

fn rho_from_rhs(r: f64) -> Result<f64, GsmError> {
    if !r.is_finite() || r < 0.0 {
        return Err(GsmError::NonFiniteQuadratic { r });
    }
    let root = (1.0 + 4.0 * r).sqrt();
    Ok(if r < 1e-8 {
        2.0 * r / (1.0 + root)
    } else {
        (root - 1.0) / 2.0
    })
}

fn check_dims(q0: &GaussianParams, theta: &DVector<f64>, g: &DVector<f64>) -> Result<(), GsmError> {
    let d = q0.dim();
    for v in [theta, g] {
        if v.len() != d {
            return Err(GsmError::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(GsmError::Gaussian(GaussianError::NonFinite {
                what: "update input",
            }));
        }
    }
    Ok(())
}

/// One closed-form KL projection onto the score constraint at `theta`.
///
/// `g` must be the target score at `theta`. Exact `ε₀ = 0` returns the input
/// unchanged. On factorization failure of the updated covariance, the error
/// carries the diagnostics for post-mortem inspection.
pub fn gsm_update(
    q0: &GaussianParams,
    theta: &DVector<f64>,
    g: &DVector<f64>,
) -> Result<(GaussianParams, GsmUpdateDiagnostics), GsmError> {
    check_dims(q0, theta, g)?;
    let d = q0.dim();

    let epsilon0 = q0.covariance() * g - q0.mean() + theta;
    if epsilon0.iter().all(|&x| x == 0.0) {
        let diagnostics = GsmUpdateDiagnostics {
            rho: solve_rho(g, q0, theta)?,
            epsilon0,
            delta_mu: DVector::zeros(d),
            delta_sigma: DMatrix::zeros(d, d),
            constraint_residual: 0.0,
        };
        return Ok((q0.clone(), diagnostics));
    }

    let u = q0.mean() - theta;
    let along = u.dot(g);
    let r = g.dot(&(q0.covariance() * g)) + along * along;
    let rho = rho_from_rhs(r)?;

    // Sherman–Morrison inverse of (1+ρ)I + u gᵀ applied to ε₀. The
    // denominator is strictly positive: (uᵀg)² ≤ ρ(1+ρ) < (1+ρ)².
    let denom = 1.0 + rho + along;
    let mu_new = q0.mean() + (&epsilon0 - &u * (g.dot(&epsilon0) / denom)) / (1.0 + rho);

    let v = &mu_new - theta;
    let mut sigma_new = q0.covariance() + &u * u.transpose() - &v * v.transpose();
    // absorb rounding drift from the rank-two correction
    sigma_new = (&sigma_new + sigma_new.transpose()) * 0.5;

    let delta_mu = &mu_new - q0.mean();
    let delta_sigma = &sigma_new - q0.covariance();

    match GaussianParams::new(mu_new, sigma_new) {
        Ok(q_new) => {
            let residual = (q_new.score(theta)? - g).amax();
            let diagnostics = GsmUpdateDiagnostics {
                rho,
                epsilon0,
                delta_mu,
                delta_sigma,
                constraint_residual: residual,
            };
            Ok((q_new, diagnostics))
        }
        Err(GaussianError::NotPositiveDefinite) => Err(GsmError::LostPositiveDefiniteness {
            diagnostics: Box::new(GsmUpdateDiagnostics {
                rho,
                epsilon0,
                delta_mu,
                delta_sigma,
                constraint_residual: f64::INFINITY,
            }),
        }),
        Err(e) => Err(e.into()),
    }
}

/// One batched iteration: draw `B` samples from `q_t`, compute the
/// single-sample update deltas independently, and advance the state by
/// their averages. Each per-sample `δΣ` uses that sample's updated mean,
/// not the batch-averaged one.
///
/// Costs exactly `B` gradient evaluations of the model.
pub fn gsm_step(
    q_t: &GaussianParams,
    model: &dyn TargetModel,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(GaussianParams, Vec<GsmUpdateDiagnostics>), GsmError> {
    if batch_size < 1 {
        return Err(GsmError::InvalidConfig("batch_size must be >= 1"));
    }
    if model.dim() != q_t.dim() {
        return Err(GsmError::DimensionMismatch {
            expected: q_t.dim(),
            got: model.dim(),
        });
    }
    let d = q_t.dim();
    let mut mean_delta_mu = DVector::zeros(d);
    let mut mean_delta_sigma = DMatrix::zeros(d, d);
    let mut diagnostics = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let theta = q_t.sample(rng);
        let g = model.grad_log_density(&theta)?;
        let (_, diag) = gsm_update(q_t, &theta, &g)?;
        mean_delta_mu += &diag.delta_mu;
        mean_delta_sigma += &diag.delta_sigma;
        diagnostics.push(diag);
    }
    let b = batch_size as f64;
    let mu_next = q_t.mean() + mean_delta_mu / b;
    let sigma_next = q_t.covariance() + mean_delta_sigma / b;
    match GaussianParams::new(mu_next, sigma_next) {
        Ok(q_next) => Ok((q_next, diagnostics)),
        Err(GaussianError::NotPositiveDefinite) => Err(GsmError::LostPositiveDefiniteness {
            diagnostics: Box::new(diagnostics.pop().expect("batch_size >= 1")),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Runs `N` iterations of [`gsm_step`] from `config.init`.
///
/// The monitor is invoked after every `monitor_every`-th iteration with the
/// current state; its records are returned as the trace. Fully deterministic
/// given `config.seed`. On failure the partial trace rides along in the
/// error.
pub fn run_gsm(
    model: &dyn TargetModel,
    config: &GsmConfig,
    monitor: &mut dyn Monitor,
) -> Result<(GaussianParams, Vec<TraceRecord>), GsmRunError> {
    let fail = |source: GsmError, iteration: u64, partial: Vec<TraceRecord>| GsmRunError {
        source,
        iteration,
        partial_trace: partial,
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, 0, Vec::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut q = config.init.clone();
    let mut trace = Vec::new();
    for i in 0..config.iterations {
        let iteration = i + 1;
        match gsm_step(&q, model, config.batch_size, &mut rng) {
            Ok((q_next, _)) => q = q_next,
            Err(e) => return Err(fail(e, iteration, trace)),
        }
        if iteration % config.monitor_every == 0 {
            let grad_evals = iteration * config.batch_size as u64;
            match monitor.observe(iteration, grad_evals, &q) {
                Ok(points) => trace.extend(points.into_iter().map(|(metric, value)| TraceRecord {
                    algorithm: "gsm".to_string(),
                    run_id: 0,
                    iteration,
                    grad_evals,
                    metric,
                    value,
                })),
                Err(e) => return Err(fail(GsmError::Metric(e), iteration, trace)),
            }
        }
    }
    Ok((q, trace))
}
