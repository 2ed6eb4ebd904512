//! Flat `key = value` experiment configuration.
//!
//! The format is plain text: one assignment per line, `#` starts a comment,
//! and nested target specifications use compact colon-prefixed strings such
//! as `gauss:d=10,c=100` or `dsl:programs/quartic.txt,dim=1`. Unknown keys
//! are hard errors with a nearest-key hint; every omitted key falls back to
//! a documented default, and the fully-resolved result can be re-rendered
//! (and re-parsed) via [`ExperimentConfig::render`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gsmvi::targets::{GaussianTargetSpec, MeanMode, SinhArcsinhSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}` (did you mean `{suggestion}`?)")]
    UnknownKey {
        line: usize,
        key: String,
        suggestion: String,
    },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("key `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: &'static str },
    #[error("referenced path does not exist: {path}")]
    MissingPath { path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Fit,
    Dims,
    Cond,
    Nongauss,
    Vectorfield,
}

impl ExperimentKind {
    fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fit => "fit",
            ExperimentKind::Dims => "dims",
            ExperimentKind::Cond => "cond",
            ExperimentKind::Nongauss => "nongauss",
            ExperimentKind::Vectorfield => "vectorfield",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmChoice {
    Gsm,
    Bbvi,
    Both,
}

impl AlgorithmChoice {
    fn name(self) -> &'static str {
        match self {
            AlgorithmChoice::Gsm => "gsm",
            AlgorithmChoice::Bbvi => "bbvi",
            AlgorithmChoice::Both => "both",
        }
    }

    pub fn runs_gsm(self) -> bool {
        matches!(self, AlgorithmChoice::Gsm | AlgorithmChoice::Both)
    }

    pub fn runs_bbvi(self) -> bool {
        matches!(self, AlgorithmChoice::Bbvi | AlgorithmChoice::Both)
    }
}

/// Target reference from the config: a built-in family or a DSL program.
#[derive(Debug, Clone)]
pub enum TargetSpec {
    Gauss(GaussianTargetSpec),
    Sinh(SinhArcsinhSpec),
    Dsl { path: PathBuf, dim: usize },
}

impl TargetSpec {
    /// Canonical compact string, parseable by [`parse_target_spec`].
    pub fn render(&self) -> String {
        fn mean_name(mode: MeanMode) -> &'static str {
            match mode {
                MeanMode::Zero => "zero",
                MeanMode::StandardNormalDraw => "draw",
            }
        }
        match self {
            TargetSpec::Gauss(g) => format!(
                "gauss:d={},c={},seed={},mean={}",
                g.dim,
                g.condition_number,
                g.seed,
                mean_name(g.mean_mode)
            ),
            TargetSpec::Sinh(s) => format!(
                "sinh:d={},c={},s={},t={},seed={},mean={}",
                s.base.dim,
                s.base.condition_number,
                s.skewness,
                s.tail_weight,
                s.base.seed,
                mean_name(s.base.mean_mode)
            ),
            TargetSpec::Dsl { path, dim } => {
                format!("dsl:{},dim={}", path.display(), dim)
            }
        }
    }
}

/// Fully-resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub algorithm: AlgorithmChoice,
    pub target: Option<TargetSpec>,
    pub runs: u32,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub gsm_iterations: u64,
    pub gsm_batch: usize,
    pub bbvi_iterations: u64,
    pub bbvi_batch: usize,
    pub bbvi_learning_rates: Vec<f64>,
    pub bbvi_entropy_per_sample: bool,
    pub monitor_every: u64,
    pub ref_count: usize,
    pub ref_seed: u64,
    pub neg_elbo_samples: usize,
    pub sweep_target_seed: u64,
    pub sweep_mean_mode: MeanMode,
    pub dims: Vec<usize>,
    pub cond_dim: usize,
    pub cond_values: Vec<f64>,
    pub nongauss_dim: usize,
    pub nongauss_cond: f64,
    pub skew_values: Vec<f64>,
    pub tail_values: Vec<f64>,
    pub vf_mu_points: usize,
    pub vf_sigma_points: usize,
    pub vf_samples: usize,
}

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "algorithm",
    "target",
    "runs",
    "base_seed",
    "output_dir",
    "gsm_iterations",
    "gsm_batch",
    "bbvi_iterations",
    "bbvi_batch",
    "bbvi_learning_rates",
    "bbvi_entropy",
    "monitor_every",
    "ref_count",
    "ref_seed",
    "neg_elbo_samples",
    "sweep_target_seed",
    "sweep_mean_mode",
    "dims",
    "cond_dim",
    "cond_values",
    "nongauss_dim",
    "nongauss_cond",
    "skew_values",
    "tail_values",
    "vf_mu_points",
    "vf_sigma_points",
    "vf_samples",
];

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            curr[j + 1] = (prev[j + 1] + 1).min(curr[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

fn nearest_key(key: &str) -> &'static str {
    KNOWN_KEYS
        .iter()
        .min_by_key(|k| edit_distance(key, k))
        .unwrap()
}

struct Raw {
    entries: Vec<(String, String)>,
}

impl Raw {
    fn take(&mut self, key: &str) -> Option<String> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(pos).1)
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        message: format!("cannot parse `{value}`"),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(|item| parse_scalar(key, item))
        .collect()
}

fn kv_pairs<'a>(
    spec: &'a str,
    body: &'a str,
) -> Result<Vec<(&'a str, &'a str)>, ConfigError> {
    body.split(',')
        .map(|pair| {
            pair.split_once('=').ok_or_else(|| ConfigError::InvalidValue {
                key: "target".to_string(),
                message: format!("`{spec}`: expected `name=value`, got `{pair}`"),
            })
        })
        .collect()
}

fn parse_mean_mode(spec: &str, value: &str) -> Result<MeanMode, ConfigError> {
    match value {
        "zero" => Ok(MeanMode::Zero),
        "draw" => Ok(MeanMode::StandardNormalDraw),
        other => Err(ConfigError::InvalidValue {
            key: "target".to_string(),
            message: format!("`{spec}`: mean must be `zero` or `draw`, got `{other}`"),
        }),
    }
}

/// Parses a compact target string: `gauss:...`, `sinh:...` or `dsl:...`.
pub fn parse_target_spec(spec: &str) -> Result<TargetSpec, ConfigError> {
    let bad = |message: String| ConfigError::InvalidValue {
        key: "target".to_string(),
        message,
    };
    let (kind, body) = spec
        .split_once(':')
        .ok_or_else(|| bad(format!("`{spec}`: expected `<kind>:<fields>`")))?;
    match kind {
        "gauss" => {
            let mut dim = None;
            let mut c = None;
            let mut seed = 0u64;
            let mut mean_mode = MeanMode::StandardNormalDraw;
            for (name, value) in kv_pairs(spec, body)? {
                match name {
                    "d" => dim = Some(parse_scalar("target", value)?),
                    "c" => c = Some(parse_scalar("target", value)?),
                    "seed" => seed = parse_scalar("target", value)?,
                    "mean" => mean_mode = parse_mean_mode(spec, value)?,
                    other => return Err(bad(format!("`{spec}`: unknown field `{other}`"))),
                }
            }
            Ok(TargetSpec::Gauss(GaussianTargetSpec {
                dim: dim.ok_or_else(|| bad(format!("`{spec}`: missing `d`")))?,
                condition_number: c.ok_or_else(|| bad(format!("`{spec}`: missing `c`")))?,
                seed,
                mean_mode,
            }))
        }
        "sinh" => {
            let mut dim = None;
            let mut c = None;
            let mut s = None;
            let mut t = None;
            let mut seed = 0u64;
            let mut mean_mode = MeanMode::StandardNormalDraw;
            for (name, value) in kv_pairs(spec, body)? {
                match name {
                    "d" => dim = Some(parse_scalar("target", value)?),
                    "c" => c = Some(parse_scalar("target", value)?),
                    "s" => s = Some(parse_scalar("target", value)?),
                    "t" => t = Some(parse_scalar("target", value)?),
                    "seed" => seed = parse_scalar("target", value)?,
                    "mean" => mean_mode = parse_mean_mode(spec, value)?,
                    other => return Err(bad(format!("`{spec}`: unknown field `{other}`"))),
                }
            }
            Ok(TargetSpec::Sinh(SinhArcsinhSpec {
                base: GaussianTargetSpec {
                    dim: dim.ok_or_else(|| bad(format!("`{spec}`: missing `d`")))?,
                    condition_number: c.ok_or_else(|| bad(format!("`{spec}`: missing `c`")))?,
                    seed,
                    mean_mode,
                },
                skewness: s.ok_or_else(|| bad(format!("`{spec}`: missing `s`")))?,
                tail_weight: t.ok_or_else(|| bad(format!("`{spec}`: missing `t`")))?,
            }))
        }
        "dsl" => {
            // `dsl:<path>,dim=<n>`; the program path may not contain commas
            let (path, rest) = body
                .split_once(',')
                .ok_or_else(|| bad(format!("`{spec}`: expected `dsl:<path>,dim=<n>`")))?;
            let mut dim = None;
            for (name, value) in kv_pairs(spec, rest)? {
                match name {
                    "dim" => dim = Some(parse_scalar("target", value)?),
                    other => return Err(bad(format!("`{spec}`: unknown field `{other}`"))),
                }
            }
            Ok(TargetSpec::Dsl {
                path: PathBuf::from(path),
                dim: dim.ok_or_else(|| bad(format!("`{spec}`: missing `dim`")))?,
            })
        }
        other => Err(bad(format!(
            "`{spec}`: unknown target kind `{other}` (gauss, sinh, dsl)"
        ))),
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{item}");
    }
    out
}

impl ExperimentConfig {
    /// Renders the fully-resolved config in the same flat format; parsing
    /// the result reproduces this config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("experiment", self.experiment.name().to_string());
        line("algorithm", self.algorithm.name().to_string());
        if let Some(target) = &self.target {
            line("target", target.render());
        }
        line("runs", self.runs.to_string());
        line("base_seed", self.base_seed.to_string());
        line("output_dir", self.output_dir.display().to_string());
        line("gsm_iterations", self.gsm_iterations.to_string());
        line("gsm_batch", self.gsm_batch.to_string());
        line("bbvi_iterations", self.bbvi_iterations.to_string());
        line("bbvi_batch", self.bbvi_batch.to_string());
        line("bbvi_learning_rates", join(&self.bbvi_learning_rates));
        line(
            "bbvi_entropy",
            if self.bbvi_entropy_per_sample {
                "per_sample".to_string()
            } else {
                "analytic".to_string()
            },
        );
        line("monitor_every", self.monitor_every.to_string());
        line("ref_count", self.ref_count.to_string());
        line("ref_seed", self.ref_seed.to_string());
        line("neg_elbo_samples", self.neg_elbo_samples.to_string());
        line("sweep_target_seed", self.sweep_target_seed.to_string());
        line(
            "sweep_mean_mode",
            match self.sweep_mean_mode {
                MeanMode::Zero => "zero".to_string(),
                MeanMode::StandardNormalDraw => "draw".to_string(),
            },
        );
        line("dims", join(&self.dims));
        line("cond_dim", self.cond_dim.to_string());
        line("cond_values", join(&self.cond_values));
        line("nongauss_dim", self.nongauss_dim.to_string());
        line("nongauss_cond", format!("{}", self.nongauss_cond));
        line("skew_values", join(&self.skew_values));
        line("tail_values", join(&self.tail_values));
        line("vf_mu_points", self.vf_mu_points.to_string());
        line("vf_sigma_points", self.vf_sigma_points.to_string());
        line("vf_samples", self.vf_samples.to_string());
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |message: String| Err(ConfigError::Invalid(message));
        if self.runs < 1 {
            return invalid("runs must be >= 1".into());
        }
        if self.gsm_iterations < 1 || self.bbvi_iterations < 1 {
            return invalid("iteration counts must be >= 1".into());
        }
        if self.gsm_batch < 1 || self.bbvi_batch < 1 {
            return invalid("batch sizes must be >= 1".into());
        }
        if self.monitor_every < 1 {
            return invalid("monitor_every must be >= 1".into());
        }
        if self.ref_count < 1 || self.neg_elbo_samples < 1 {
            return invalid("sample counts must be >= 1".into());
        }
        if self.bbvi_learning_rates.is_empty() {
            return invalid("bbvi_learning_rates must be nonempty".into());
        }
        for &lr in &self.bbvi_learning_rates {
            if !(1e-6..=1.0).contains(&lr) {
                return invalid(format!("learning rate {lr} outside [1e-6, 1]"));
            }
        }
        match self.experiment {
            ExperimentKind::Fit => {
                if self.target.is_none() {
                    return Err(ConfigError::MissingKey { key: "target" });
                }
            }
            ExperimentKind::Vectorfield => {
                if self.vf_mu_points < 2 || self.vf_sigma_points < 2 || self.vf_samples < 1 {
                    return invalid("vector-field grid needs >= 2 points per axis".into());
                }
            }
            ExperimentKind::Dims => {
                if self.dims.is_empty() {
                    return invalid("dims must be nonempty".into());
                }
            }
            ExperimentKind::Cond => {
                if self.cond_values.is_empty() {
                    return invalid("cond_values must be nonempty".into());
                }
            }
            ExperimentKind::Nongauss => {
                if self.skew_values.is_empty() && self.tail_values.is_empty() {
                    return invalid("nongauss sweeps are empty".into());
                }
            }
        }
        if self.target.is_some() && self.experiment != ExperimentKind::Fit {
            return invalid(format!(
                "target is only used by the fit experiment, not {}",
                self.experiment.name()
            ));
        }
        if let Some(TargetSpec::Dsl { path, .. }) = &self.target {
            if !path.exists() {
                return Err(ConfigError::MissingPath { path: path.clone() });
            }
        }
        Ok(())
    }
}

/// Parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config = parse_config_text(&text)?;
    config.validate()?;
    Ok(config)
}

/// Parses config text without touching the filesystem.
pub fn parse_config_text(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.split_once('#') {
            Some((head, _)) => head,
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: line_no,
            text: line.to_string(),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                line: line_no,
                suggestion: nearest_key(&key).to_string(),
                key,
            });
        }
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::DuplicateKey {
                line: line_no,
                key,
            });
        }
        entries.push((key, value));
    }
    let mut raw = Raw { entries };

    let experiment = match raw.take("experiment") {
        Some(value) => match value.as_str() {
            "fit" => ExperimentKind::Fit,
            "dims" => ExperimentKind::Dims,
            "cond" => ExperimentKind::Cond,
            "nongauss" => ExperimentKind::Nongauss,
            "vectorfield" => ExperimentKind::Vectorfield,
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "experiment".into(),
                    message: format!(
                        "`{other}` is not one of fit, dims, cond, nongauss, vectorfield"
                    ),
                })
            }
        },
        None => return Err(ConfigError::MissingKey { key: "experiment" }),
    };
    let algorithm = match raw.take("algorithm").as_deref() {
        None | Some("both") => AlgorithmChoice::Both,
        Some("gsm") => AlgorithmChoice::Gsm,
        Some("bbvi") => AlgorithmChoice::Bbvi,
        Some(other) => {
            return Err(ConfigError::InvalidValue {
                key: "algorithm".into(),
                message: format!("`{other}` is not one of gsm, bbvi, both"),
            })
        }
    };
    let target = raw.take("target").map(|s| parse_target_spec(&s)).transpose()?;
    let bbvi_entropy_per_sample = match raw.take("bbvi_entropy").as_deref() {
        None | Some("analytic") => false,
        Some("per_sample") => true,
        Some(other) => {
            return Err(ConfigError::InvalidValue {
                key: "bbvi_entropy".into(),
                message: format!("`{other}` is not one of analytic, per_sample"),
            })
        }
    };
    let sweep_mean_mode = match raw.take("sweep_mean_mode").as_deref() {
        None | Some("draw") => MeanMode::StandardNormalDraw,
        Some("zero") => MeanMode::Zero,
        Some(other) => {
            return Err(ConfigError::InvalidValue {
                key: "sweep_mean_mode".into(),
                message: format!("`{other}` is not one of zero, draw"),
            })
        }
    };

    macro_rules! scalar {
        ($key:literal, $default:expr) => {
            match raw.take($key) {
                Some(value) => parse_scalar($key, &value)?,
                None => $default,
            }
        };
    }
    macro_rules! list {
        ($key:literal, $default:expr) => {
            match raw.take($key) {
                Some(value) => parse_list($key, &value)?,
                None => $default,
            }
        };
    }

    let config = ExperimentConfig {
        experiment,
        algorithm,
        target,
        runs: scalar!("runs", 10),
        base_seed: scalar!("base_seed", 0),
        output_dir: PathBuf::from(raw.take("output_dir").unwrap_or_else(|| "out".into())),
        gsm_iterations: scalar!("gsm_iterations", 2000),
        gsm_batch: scalar!("gsm_batch", 2),
        bbvi_iterations: scalar!("bbvi_iterations", 20000),
        bbvi_batch: scalar!("bbvi_batch", 2),
        bbvi_learning_rates: list!("bbvi_learning_rates", vec![1e-1, 1e-2, 1e-3]),
        bbvi_entropy_per_sample,
        monitor_every: scalar!("monitor_every", 1),
        ref_count: scalar!("ref_count", 1000),
        ref_seed: scalar!("ref_seed", 1_000_003),
        neg_elbo_samples: scalar!("neg_elbo_samples", 100),
        sweep_target_seed: scalar!("sweep_target_seed", 7),
        sweep_mean_mode,
        dims: list!("dims", vec![2, 4, 8, 16, 32]),
        cond_dim: scalar!("cond_dim", 10),
        cond_values: list!("cond_values", vec![1.0, 10.0, 100.0, 1000.0]),
        nongauss_dim: scalar!("nongauss_dim", 10),
        nongauss_cond: scalar!("nongauss_cond", 10.0),
        skew_values: list!("skew_values", vec![0.0, 0.5, 1.0, 1.8]),
        tail_values: list!("tail_values", vec![0.5, 1.0, 1.5]),
        vf_mu_points: scalar!("vf_mu_points", 41),
        vf_sigma_points: scalar!("vf_sigma_points", 29),
        vf_samples: scalar!("vf_samples", 5),
    };
    debug_assert!(raw.entries.is_empty(), "all known keys consumed");
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_fit_config_fills_defaults() {
        let config = parse_config_text("experiment = fit\ntarget = gauss:d=2,c=1\n").unwrap();
        config.validate().unwrap();
        assert_eq!(config.gsm_batch, 2);
        assert_eq!(config.bbvi_batch, 2);
        assert_eq!(config.runs, 10);
        assert_eq!(config.bbvi_learning_rates, vec![0.1, 0.01, 0.001]);
        match config.target {
            Some(TargetSpec::Gauss(g)) => {
                assert_eq!(g.dim, 2);
                assert_eq!(g.condition_number, 1.0);
                assert_eq!(g.mean_mode, MeanMode::StandardNormalDraw);
            }
            other => panic!("unexpected target {other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_the_nearest_valid_key() {
        let err = parse_config_text("experiment = fit\nlearningrate = 0.1\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { key, suggestion, .. } => {
                assert_eq!(key, "learningrate");
                assert_eq!(suggestion, "bbvi_learning_rates");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn zero_runs_is_a_validation_error() {
        let config =
            parse_config_text("experiment = fit\ntarget = gauss:d=2,c=1\nruns = 0\n").unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn duplicate_and_malformed_lines_error() {
        assert!(matches!(
            parse_config_text("experiment = fit\nexperiment = dims\n"),
            Err(ConfigError::DuplicateKey { .. })
        ));
        assert!(matches!(
            parse_config_text("experiment fit\n"),
            Err(ConfigError::Malformed { .. })
        ));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# benchmark\n\nexperiment = cond   # sweep\n";
        let config = parse_config_text(text).unwrap();
        assert_eq!(config.experiment, ExperimentKind::Cond);
        assert_eq!(config.cond_values, vec![1.0, 10.0, 100.0, 1000.0]);
    }

    #[test]
    fn render_roundtrips_through_the_parser() {
        let text = "experiment = fit\ntarget = sinh:d=3,c=5,s=0.5,t=1.2\nruns = 4\nbase_seed = 9\nbbvi_learning_rates = 0.1,0.001\n";
        let config = parse_config_text(text).unwrap();
        let rendered = config.render();
        let reparsed = parse_config_text(&rendered).unwrap();
        assert_eq!(rendered, reparsed.render());
    }

    #[test]
    fn target_spec_parse_errors() {
        assert!(parse_target_spec("gauss:d=2").is_err()); // missing c
        assert!(parse_target_spec("gauss:d=2,c=1,foo=3").is_err());
        assert!(parse_target_spec("warp:d=2").is_err());
        assert!(parse_target_spec("dsl:prog.txt").is_err()); // missing dim
    }

    #[test]
    fn sweep_experiments_reject_a_target_key() {
        let config =
            parse_config_text("experiment = dims\ntarget = gauss:d=2,c=1\n").unwrap();
        assert!(config.validate().is_err());
    }
}
