//! Quality-of-fit measurements and trace plumbing.
//!
//! The forward KL `KL(p ‖ q)` is estimated empirically over a fixed,
//! pre-generated reference sample set from the target (the same set for
//! every evaluation, so curves are comparable across iterations and
//! algorithms). Targets without a known normalizer fall back to the
//! negative ELBO. Metric randomness comes from a dedicated stream so that
//! monitoring can never perturb an optimizer trajectory.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gaussian::{GaussianError, GaussianParams};
use crate::targets::{TargetError, TargetModel};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("target normalizer unknown; forward KL would be shifted by an unknown constant")]
    UnnormalizedTarget,
    #[error("target has no exact sampler")]
    NoExactSampler,
    #[error("empty sample set")]
    EmptySamples,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

/// Quantities recorded along a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    FklMean,
    NegElbo,
    KlGaussExact,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::FklMean => "fkl_mean",
            Metric::NegElbo => "neg_elbo",
            Metric::KlGaussExact => "kl_gauss_exact",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "fkl_mean" => Metric::FklMean,
            "neg_elbo" => Metric::NegElbo,
            "kl_gauss_exact" => Metric::KlGaussExact,
            _ => return None,
        })
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of a convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub algorithm: String,
    pub run_id: u32,
    pub iteration: u64,
    pub grad_evals: u64,
    pub metric: Metric,
    pub value: f64,
}

/// Callback invoked by the runners with the current variational state.
pub trait Monitor {
    fn observe(
        &mut self,
        iteration: u64,
        grad_evals: u64,
        q: &GaussianParams,
    ) -> Result<Vec<(Metric, f64)>, MetricError>;
}

/// Records nothing.
pub struct NullMonitor;

impl Monitor for NullMonitor {
    fn observe(
        &mut self,
        _iteration: u64,
        _grad_evals: u64,
        _q: &GaussianParams,
    ) -> Result<Vec<(Metric, f64)>, MetricError> {
        Ok(Vec::new())
    }
}

/// XOR salt that derives a metric stream from a run seed, keeping metric
/// draws off the optimizer's stream.
pub const METRIC_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// The dedicated metric RNG for a run.
pub fn metric_rng(run_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(run_seed ^ METRIC_STREAM_SALT)
}

/// A fixed set of samples from a target, drawn once and reused for every
/// forward-KL evaluation.
#[derive(Debug, Clone)]
pub struct ReferenceSampleSet {
    pub target_id: String,
    pub generator_seed: u64,
    samples: Vec<DVector<f64>>,
}

impl ReferenceSampleSet {
    /// Draws `count` samples from the target's exact sampler; regeneration
    /// with the same seed is bit-identical.
    pub fn generate(
        target: &dyn TargetModel,
        target_id: &str,
        count: usize,
        seed: u64,
    ) -> Result<Self, MetricError> {
        if count == 0 {
            return Err(MetricError::EmptySamples);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            samples.push(
                target
                    .exact_sample(&mut rng)
                    .ok_or(MetricError::NoExactSampler)?,
            );
        }
        Ok(Self {
            target_id: target_id.to_string(),
            generator_seed: seed,
            samples,
        })
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }
}

/// Empirical forward KL: the mean over the reference samples of
/// `log p(θ_i) − log q(θ_i)`.
///
/// Reported as a mean rather than a sum so thresholds are independent of
/// the reference count. Requires a normalized target.
pub fn forward_kl_mean(
    refs: &ReferenceSampleSet,
    target: &dyn TargetModel,
    q: &GaussianParams,
) -> Result<f64, MetricError> {
    if !target.normalizer_known() {
        return Err(MetricError::UnnormalizedTarget);
    }
    if refs.is_empty() {
        return Err(MetricError::EmptySamples);
    }
    if refs.dim() != q.dim() || target.dim() != q.dim() {
        return Err(MetricError::DimensionMismatch {
            expected: q.dim(),
            got: refs.dim(),
        });
    }
    let mut acc = 0.0;
    for point in refs.samples() {
        acc += target.log_density(point)? - q.log_density(point)?;
    }
    Ok(acc / refs.len() as f64)
}

/// Negative ELBO over `batch` fresh samples from `q`, using the caller's
/// (metric-dedicated) RNG stream.
pub fn neg_elbo_metric(
    q: &GaussianParams,
    model: &dyn TargetModel,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, MetricError> {
    if batch == 0 {
        return Err(MetricError::EmptySamples);
    }
    if model.dim() != q.dim() {
        return Err(MetricError::DimensionMismatch {
            expected: q.dim(),
            got: model.dim(),
        });
    }
    let mut acc = 0.0;
    for _ in 0..batch {
        let theta = q.sample(rng);
        acc += model.log_density(&theta)? - q.log_density(&theta)?;
    }
    Ok(-(acc / batch as f64))
}

/// Forward-KL monitor over a fixed reference set.
///
/// The per-reference target log densities are cached at construction; they
/// are constant across iterations, so each observation costs one variational
/// log-density sweep and produces exactly the value [`forward_kl_mean`]
/// would.
pub struct FklMonitor {
    refs: ReferenceSampleSet,
    target_log_densities: Vec<f64>,
}

impl FklMonitor {
    pub fn new(refs: ReferenceSampleSet, target: &dyn TargetModel) -> Result<Self, MetricError> {
        if !target.normalizer_known() {
            return Err(MetricError::UnnormalizedTarget);
        }
        let target_log_densities = refs
            .samples()
            .iter()
            .map(|p| target.log_density(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            refs,
            target_log_densities,
        })
    }
}

impl Monitor for FklMonitor {
    fn observe(
        &mut self,
        _iteration: u64,
        _grad_evals: u64,
        q: &GaussianParams,
    ) -> Result<Vec<(Metric, f64)>, MetricError> {
        let mut acc = 0.0;
        for (point, target_logp) in self.refs.samples().iter().zip(&self.target_log_densities) {
            acc += target_logp - q.log_density(point)?;
        }
        Ok(vec![(Metric::FklMean, acc / self.refs.len() as f64)])
    }
}

/// Negative-ELBO monitor with its own RNG stream.
pub struct NegElboMonitor<'a> {
    model: &'a dyn TargetModel,
    batch: usize,
    rng: ChaCha8Rng,
}

impl<'a> NegElboMonitor<'a> {
    pub fn new(model: &'a dyn TargetModel, batch: usize, run_seed: u64) -> Self {
        Self {
            model,
            batch,
            rng: metric_rng(run_seed),
        }
    }
}

impl Monitor for NegElboMonitor<'_> {
    fn observe(
        &mut self,
        _iteration: u64,
        _grad_evals: u64,
        q: &GaussianParams,
    ) -> Result<Vec<(Metric, f64)>, MetricError> {
        Ok(vec![(
            Metric::NegElbo,
            neg_elbo_metric(q, self.model, self.batch, &mut self.rng)?,
        )])
    }
}

/// Exact Gaussian-to-Gaussian forward KL against a known Gaussian target.
pub struct ExactKlMonitor {
    target: GaussianParams,
}

impl ExactKlMonitor {
    pub fn new(target: GaussianParams) -> Self {
        Self { target }
    }
}

impl Monitor for ExactKlMonitor {
    fn observe(
        &mut self,
        _iteration: u64,
        _grad_evals: u64,
        q: &GaussianParams,
    ) -> Result<Vec<(Metric, f64)>, MetricError> {
        Ok(vec![(Metric::KlGaussExact, self.target.kl(q)?)])
    }
}
