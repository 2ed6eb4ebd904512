//! Experiment orchestration: builds targets, fans runs out across threads,
//! and persists traces.
//!
//! Determinism contract: the entire output tree is a pure function of the
//! resolved config. Run `r` always uses seed `base_seed + r`; BBVI
//! learning-rate grid members share the run seed (common random numbers);
//! metric monitors draw from a salted stream that never touches the
//! optimizer's. Runs execute in parallel but results are assembled in a
//! fixed order before writing.

use std::path::{Path, PathBuf};

use gsmvi::bbvi::{run_bbvi, BbviConfig, BbviRunError, EntropyEstimator};
use gsmvi::dsl;
use gsmvi::gaussian::GaussianError;
use gsmvi::gsm::{gsm_update, run_gsm, GsmConfig, GsmError, GsmRunError};
use gsmvi::metrics::{
    FklMonitor, MetricError, Monitor, NegElboMonitor, ReferenceSampleSet, TraceRecord,
};
use gsmvi::targets::{
    make_dsl_target, make_gaussian_target, make_sinh_arcsinh_target, GaussianTarget,
    GaussianTargetSpec, SinhArcsinhSpec, TargetError, TargetModel,
};
use gsmvi::GaussianParams;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, TargetSpec};
use crate::csvio::{write_trace_csv, write_vectorfield_csv, CsvError, VectorFieldRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Dsl(#[from] dsl::DslError),
    #[error("gsm {0}")]
    GsmRun(#[from] GsmRunError),
    #[error("bbvi {0}")]
    BbviRun(#[from] BbviRunError),
    #[error("gsm update failed: {0}")]
    Gsm(#[from] GsmError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Materializes a [`TargetSpec`] into a model plus its canonical id.
pub fn build_target(spec: &TargetSpec) -> Result<(Box<dyn TargetModel>, String), HarnessError> {
    let id = spec.render();
    let model: Box<dyn TargetModel> = match spec {
        TargetSpec::Gauss(g) => Box::new(make_gaussian_target(g)?),
        TargetSpec::Sinh(s) => Box::new(make_sinh_arcsinh_target(s)?),
        TargetSpec::Dsl { path, dim } => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let program = dsl::parse(text.trim(), *dim)?;
            Box::new(make_dsl_target(program, *dim)?)
        }
    };
    Ok((model, id))
}

/// Runs the configured experiment, writing `config.echo` plus per-setting
/// trace files under the output directory. Partial outputs are kept when a
/// run fails; the first failure is reported after everything writable has
/// been written.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(), HarnessError> {
    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let echo_path = config.output_dir.join("config.echo");
    std::fs::write(&echo_path, config.render()).map_err(io_err(&echo_path))?;

    match config.experiment {
        ExperimentKind::Fit => {
            let spec = config.target.as_ref().expect("validated");
            let (target, target_id) = build_target(spec)?;
            run_suite(config, &config.output_dir, target.as_ref(), &target_id)
        }
        ExperimentKind::Dims => {
            for &dim in &config.dims {
                let spec = TargetSpec::Gauss(GaussianTargetSpec {
                    dim,
                    condition_number: 1.0,
                    seed: config.sweep_target_seed,
                    mean_mode: config.sweep_mean_mode,
                });
                let (target, target_id) = build_target(&spec)?;
                let dir = config.output_dir.join(format!("d{dim}"));
                run_suite(config, &dir, target.as_ref(), &target_id)?;
            }
            Ok(())
        }
        ExperimentKind::Cond => {
            for &c in &config.cond_values {
                let spec = TargetSpec::Gauss(GaussianTargetSpec {
                    dim: config.cond_dim,
                    condition_number: c,
                    seed: config.sweep_target_seed,
                    mean_mode: config.sweep_mean_mode,
                });
                let (target, target_id) = build_target(&spec)?;
                let dir = config.output_dir.join(format!("c{c}"));
                run_suite(config, &dir, target.as_ref(), &target_id)?;
            }
            Ok(())
        }
        ExperimentKind::Nongauss => {
            let mut sweep: Vec<(f64, f64)> =
                config.skew_values.iter().map(|&s| (s, 1.0)).collect();
            for &t in &config.tail_values {
                if !sweep.contains(&(0.0, t)) {
                    sweep.push((0.0, t));
                }
            }
            for (s, t) in sweep {
                let spec = TargetSpec::Sinh(SinhArcsinhSpec {
                    base: GaussianTargetSpec {
                        dim: config.nongauss_dim,
                        condition_number: config.nongauss_cond,
                        seed: config.sweep_target_seed,
                        mean_mode: config.sweep_mean_mode,
                    },
                    skewness: s,
                    tail_weight: t,
                });
                let (target, target_id) = build_target(&spec)?;
                let dir = config.output_dir.join(format!("s{s}_t{t}"));
                run_suite(config, &dir, target.as_ref(), &target_id)?;
            }
            Ok(())
        }
        ExperimentKind::Vectorfield => {
            let rows = vector_field_rows(config)?;
            let path = config.output_dir.join("vectorfield.csv");
            write_vectorfield_csv(&rows, &path)?;
            Ok(())
        }
    }
}

fn make_monitor<'a>(
    refs: Option<&ReferenceSampleSet>,
    target: &'a dyn TargetModel,
    run_seed: u64,
    neg_elbo_samples: usize,
) -> Result<Box<dyn Monitor + 'a>, HarnessError> {
    Ok(match refs {
        Some(refs) => Box::new(FklMonitor::new(refs.clone(), target)?),
        None => Box::new(NegElboMonitor::new(target, neg_elbo_samples, run_seed)),
    })
}

/// Runs the configured algorithms against one target and writes
/// `trace.csv` (and `best.txt` when the BBVI grid ran) into `dir`.
fn run_suite(
    config: &ExperimentConfig,
    dir: &Path,
    target: &dyn TargetModel,
    target_id: &str,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    // forward KL against fixed reference samples when possible, negative
    // ELBO otherwise (unnormalized or sampler-free targets)
    let refs = if target.normalizer_known() {
        match ReferenceSampleSet::generate(target, target_id, config.ref_count, config.ref_seed)
        {
            Ok(refs) => Some(refs),
            Err(MetricError::NoExactSampler) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    let mut records: Vec<TraceRecord> = Vec::new();
    let mut first_error: Option<HarnessError> = None;
    let note_failure = |records: &mut Vec<TraceRecord>,
                            first_error: &mut Option<HarnessError>,
                            partial: Vec<TraceRecord>,
                            error: HarnessError| {
        records.extend(partial);
        if first_error.is_none() {
            *first_error = Some(error);
        }
    };

    if config.algorithm.runs_gsm() {
        let results: Vec<Result<Vec<TraceRecord>, HarnessError>> = (0..config.runs)
            .into_par_iter()
            .map(|run| {
                let seed = config.base_seed + run as u64;
                let init = GaussianParams::standard(target.dim())?;
                let mut gsm_config =
                    GsmConfig::new(init, config.gsm_iterations, config.gsm_batch, seed);
                gsm_config.monitor_every = config.monitor_every;
                let mut monitor =
                    make_monitor(refs.as_ref(), target, seed, config.neg_elbo_samples)?;
                let (_, mut trace) = run_gsm(target, &gsm_config, monitor.as_mut())
                    .map_err(|mut e| {
                        for r in &mut e.partial_trace {
                            r.run_id = run;
                        }
                        e
                    })?;
                for r in &mut trace {
                    r.run_id = run;
                }
                Ok(trace)
            })
            .collect();
        for result in results {
            match result {
                Ok(trace) => records.extend(trace),
                Err(HarnessError::GsmRun(mut e)) => {
                    let partial = std::mem::take(&mut e.partial_trace);
                    note_failure(&mut records, &mut first_error, partial, e.into());
                }
                Err(e) => note_failure(&mut records, &mut first_error, Vec::new(), e),
            }
        }
    }

    if config.algorithm.runs_bbvi() {
        let grid = &config.bbvi_learning_rates;
        let jobs: Vec<(usize, u32)> = (0..grid.len())
            .flat_map(|li| (0..config.runs).map(move |run| (li, run)))
            .collect();
        let results: Vec<Result<Vec<TraceRecord>, HarnessError>> = jobs
            .par_iter()
            .map(|&(li, run)| {
                let lr = grid[li];
                let tag = format!("bbvi:lr={lr}");
                let seed = config.base_seed + run as u64;
                let init = GaussianParams::standard(target.dim())?;
                let mut bbvi_config =
                    BbviConfig::new(init, config.bbvi_iterations, lr, seed);
                bbvi_config.batch_size = config.bbvi_batch;
                bbvi_config.monitor_every = config.monitor_every;
                bbvi_config.entropy = if config.bbvi_entropy_per_sample {
                    EntropyEstimator::PerSample
                } else {
                    EntropyEstimator::Analytic
                };
                let mut monitor =
                    make_monitor(refs.as_ref(), target, seed, config.neg_elbo_samples)?;
                let retag = |records: &mut [TraceRecord]| {
                    for r in records.iter_mut() {
                        r.run_id = run;
                        r.algorithm = tag.clone();
                    }
                };
                let (_, mut trace) =
                    run_bbvi(target, &bbvi_config, monitor.as_mut()).map_err(|mut e| {
                        retag(&mut e.partial_trace);
                        e
                    })?;
                retag(&mut trace);
                Ok(trace)
            })
            .collect();

        // mean final metric per learning rate, for the best.txt marker
        let mut finals: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
        for (job, result) in jobs.iter().zip(results) {
            match result {
                Ok(trace) => {
                    if let Some(last) = trace.last() {
                        finals[job.0].push(last.value);
                    }
                    records.extend(trace);
                }
                Err(HarnessError::BbviRun(mut e)) => {
                    let partial = std::mem::take(&mut e.partial_trace);
                    note_failure(&mut records, &mut first_error, partial, e.into());
                }
                Err(e) => note_failure(&mut records, &mut first_error, Vec::new(), e),
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (li, values) in finals.iter().enumerate() {
            if values.is_empty() {
                continue;
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            if best.map_or(true, |(_, current)| mean < current) {
                best = Some((li, mean));
            }
        }
        if let Some((li, _)) = best {
            let path = dir.join("best.txt");
            std::fs::write(&path, format!("bbvi:lr={}\n", grid[li])).map_err(io_err(&path))?;
        }
    }

    if !records.is_empty() {
        write_trace_csv(&records, &dir.join("trace.csv"))?;
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// The 1-D update vector field of Fig-style plots: for each grid point
/// `(μ, σ)` against the standard-normal target, the average update
/// direction `(δμ, δσ)` over `vf_samples` independent draws, with
/// `δσ = √Σ_new − σ`. One seeded stream walks the grid row-major.
pub fn vector_field_rows(config: &ExperimentConfig) -> Result<Vec<VectorFieldRow>, HarnessError> {
    let target = GaussianTarget::from_params(GaussianParams::standard(1)?);
    let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed);
    let mus = linspace(-2.0, 2.0, config.vf_mu_points);
    let sigmas = linspace(0.2, 3.0, config.vf_sigma_points);
    let mut rows = Vec::with_capacity(mus.len() * sigmas.len());
    for &mu in &mus {
        for &sigma in &sigmas {
            let q = GaussianParams::new(
                DVector::from_vec(vec![mu]),
                DMatrix::from_vec(1, 1, vec![sigma * sigma]),
            )?;
            let mut dmu = 0.0;
            let mut dsigma = 0.0;
            for _ in 0..config.vf_samples {
                let theta = q.sample(&mut rng);
                let g = target.grad_log_density(&theta)?;
                let (q_new, diag) = gsm_update(&q, &theta, &g)?;
                dmu += diag.delta_mu[0];
                dsigma += q_new.chol()[(0, 0)] - sigma;
            }
            rows.push(VectorFieldRow {
                mu,
                sigma,
                dmu: dmu / config.vf_samples as f64,
                dsigma: dsigma / config.vf_samples as f64,
            });
        }
    }
    Ok(rows)
}
