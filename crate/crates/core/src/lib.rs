//! Gaussian score-matching variational inference.
//!
//! The library fits a full-covariance multivariate Gaussian to an
//! unnormalized target density. Two fitters share the same interface:
//!
//! * [`gsm`] — iterated closed-form KL projections onto the score-matching
//!   constraint at freshly sampled points; no learning rate.
//! * [`bbvi`] — reparameterization-gradient ELBO ascent with ADAM, the
//!   conventional baseline.
//!
//! Supporting modules: [`gaussian`] (the variational family), [`targets`]
//! (built-in target densities), [`dsl`] (a small differentiable expression
//! language for user-defined log joints) and [`metrics`] (forward-KL and
//! negative-ELBO monitoring plus trace records).

pub mod bbvi;
pub mod dsl;
pub mod gaussian;
pub mod gsm;
pub mod metrics;
pub mod targets;

pub use gaussian::{GaussianError, GaussianParams};
