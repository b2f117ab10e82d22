//! Experiment files.
//!
//! An experiment is a TOML document with flat top-level keys, an optional
//! `[distribution]` table and one `[[policy]]` table per policy:
//!
//! ```toml
//! name = "linear"
//! horizon = 10000
//! dim = 15
//! arms = 20
//! link = "linear"        # linear | poisson | square | fifth | quadratic
//! noise_sigma = 0.5
//! # delta = 0.05, repetitions = 20, thin = 10, master_seed = 0
//! # sparsity = 10, poisson_clamp = 10.0, output = "results"
//!
//! [distribution]
//! kind = "standard"      # or "gaussian" with `mean` and `covariance`
//!
//! [[policy]]
//! kind = "estor"
//! tau_multiplier = 2.0
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sib_core::{ContextDistribution, GaussianContext, LinkFunction};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_REPETITIONS: usize = 20;
pub const DEFAULT_THIN: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_repetitions() -> usize {
    DEFAULT_REPETITIONS
}

fn default_thin() -> usize {
    DEFAULT_THIN
}

fn one() -> f64 {
    1.0
}

fn default_stor_phase() -> f64 {
    sib_core::policies::DEFAULT_STOR_PHASE_MULTIPLIER
}

fn default_t0() -> usize {
    sib_core::policies::DEFAULT_T0
}

fn default_ridge() -> f64 {
    sib_core::policies::DEFAULT_RIDGE
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    #[default]
    Standard,
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
}

/// Per-policy hyperparameters. Omitted UCB widths and posterior scales
/// default to `noise · confidence_radius(d, T, δ)` times the multiplier.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Uniform {
        name: Option<String>,
    },
    Stor {
        name: Option<String>,
        #[serde(default = "one")]
        tau_multiplier: f64,
        #[serde(default = "default_stor_phase")]
        phase_multiplier: f64,
        /// Scales the sparse-regime ℓ1 weight; 0 keeps the dense estimator.
        #[serde(default)]
        lambda_multiplier: f64,
    },
    Estor {
        name: Option<String>,
        #[serde(default = "default_t0")]
        t0: usize,
        #[serde(default = "one")]
        tau_multiplier: f64,
        #[serde(default)]
        lambda_multiplier: f64,
    },
    Gstor {
        name: Option<String>,
        #[serde(default = "one")]
        tau_multiplier: f64,
        #[serde(default = "one")]
        phase_multiplier: f64,
        bandwidth: Option<f64>,
        window: Option<f64>,
    },
    Linucb {
        name: Option<String>,
        alpha: Option<f64>,
        #[serde(default = "one")]
        alpha_multiplier: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    Lints {
        name: Option<String>,
        v: Option<f64>,
        #[serde(default = "one")]
        v_multiplier: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    UcbGlm {
        name: Option<String>,
        /// Link the baseline fits; the environment's link when omitted.
        model: Option<String>,
        alpha: Option<f64>,
        #[serde(default = "one")]
        alpha_multiplier: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
        /// Uniform rounds before the first fit; `dim` when omitted.
        warmup: Option<usize>,
    },
    GlmTsl {
        name: Option<String>,
        model: Option<String>,
        scale: Option<f64>,
        #[serde(default = "one")]
        scale_multiplier: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
        warmup: Option<usize>,
    },
}

impl PolicySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicySpec::Uniform { .. } => "uniform",
            PolicySpec::Stor { .. } => "stor",
            PolicySpec::Estor { .. } => "estor",
            PolicySpec::Gstor { .. } => "gstor",
            PolicySpec::Linucb { .. } => "linucb",
            PolicySpec::Lints { .. } => "lints",
            PolicySpec::UcbGlm { .. } => "ucb_glm",
            PolicySpec::GlmTsl { .. } => "glm_tsl",
        }
    }

    fn explicit_name(&self) -> Option<&str> {
        match self {
            PolicySpec::Uniform { name }
            | PolicySpec::Stor { name, .. }
            | PolicySpec::Estor { name, .. }
            | PolicySpec::Gstor { name, .. }
            | PolicySpec::Linucb { name, .. }
            | PolicySpec::Lints { name, .. }
            | PolicySpec::UcbGlm { name, .. }
            | PolicySpec::GlmTsl { name, .. } => name.as_deref(),
        }
    }

    fn model(&self) -> Option<&str> {
        match self {
            PolicySpec::UcbGlm { model, .. } | PolicySpec::GlmTsl { model, .. } => model.as_deref(),
            _ => None,
        }
    }

    /// Display name; GLM baselines fitted under a foreign link carry it in brackets.
    pub fn display_name(&self, env_link: &str) -> String {
        if let Some(name) = self.explicit_name() {
            return name.to_owned();
        }
        let base = match self {
            PolicySpec::Uniform { .. } => "Uniform",
            PolicySpec::Stor { .. } => "STOR",
            PolicySpec::Estor { .. } => "ESTOR",
            PolicySpec::Gstor { .. } => "GSTOR",
            PolicySpec::Linucb { .. } => "LinUCB",
            PolicySpec::Lints { .. } => "LinTS",
            PolicySpec::UcbGlm { .. } => "UCB-GLM",
            PolicySpec::GlmTsl { .. } => "GLM-TSL",
        };
        match self.model() {
            Some(m) if m != env_link => format!("{base}[{m}]"),
            _ => base.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    horizon: usize,
    dim: usize,
    arms: usize,
    #[serde(default = "default_delta")]
    delta: f64,
    link: String,
    noise_sigma: f64,
    sparsity: Option<usize>,
    #[serde(default)]
    distribution: DistributionSpec,
    #[serde(default = "default_repetitions")]
    repetitions: usize,
    #[serde(default)]
    master_seed: u64,
    output: Option<PathBuf>,
    #[serde(default = "default_thin")]
    thin: usize,
    poisson_clamp: Option<f64>,
    #[serde(rename = "policy", default)]
    policies: Vec<PolicySpec>,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub horizon: usize,
    pub dim: usize,
    pub arms: usize,
    pub delta: f64,
    pub link: LinkFunction,
    pub noise_sigma: f64,
    pub sparsity: Option<usize>,
    pub distribution: Arc<dyn ContextDistribution>,
    pub repetitions: usize,
    pub master_seed: u64,
    pub output: Option<PathBuf>,
    pub thin: usize,
    pub poisson_clamp: Option<f64>,
    pub policies: Vec<PolicySpec>,
    /// Unique display names, parallel to `policies`.
    pub policy_names: Vec<String>,
}

/// Links addressable by name in experiment files.
pub fn parse_link(name: &str) -> Option<LinkFunction> {
    match name {
        "linear" => Some(LinkFunction::Linear),
        "poisson" => Some(LinkFunction::PoissonExp),
        "square" => Some(LinkFunction::SquarePlus),
        "fifth" => Some(LinkFunction::Fifth),
        "quadratic" => Some(LinkFunction::quadratic()),
        _ => None,
    }
}

fn build_distribution(spec: &DistributionSpec, dim: usize) -> Result<Arc<dyn ContextDistribution>, ConfigError> {
    let dist = match spec {
        DistributionSpec::Standard => GaussianContext::standard(dim),
        DistributionSpec::Gaussian { mean, covariance } => {
            if mean.len() != dim {
                return Err(ConfigError::invalid(
                    "distribution.mean",
                    format!("expected {dim} entries, got {}", mean.len()),
                ));
            }
            if covariance.len() != dim || covariance.iter().any(|row| row.len() != dim) {
                return Err(ConfigError::invalid(
                    "distribution.covariance",
                    format!("expected a {dim}x{dim} matrix"),
                ));
            }
            let cov = DMatrix::from_fn(dim, dim, |i, j| covariance[i][j]);
            GaussianContext::new(DVector::from_column_slice(mean), cov)
        }
    };
    dist.map(|d| Arc::new(d) as Arc<dyn ContextDistribution>)
        .map_err(|e| ConfigError::invalid("distribution", e.to_string()))
}

fn check_multiplier(field: &str, value: f64, allow_zero: bool) -> Result<(), ConfigError> {
    let ok = value.is_finite() && if allow_zero { value >= 0.0 } else { value > 0.0 };
    if ok {
        Ok(())
    } else {
        let need = if allow_zero { "non-negative" } else { "positive" };
        Err(ConfigError::invalid(
            field,
            format!("must be {need} and finite, got {value}"),
        ))
    }
}

fn check_policy(index: usize, spec: &PolicySpec) -> Result<(), ConfigError> {
    let field = |f: &str| format!("policy[{index}].{f}");
    match spec {
        PolicySpec::Uniform { .. } => {}
        PolicySpec::Stor {
            tau_multiplier,
            phase_multiplier,
            lambda_multiplier,
            ..
        } => {
            check_multiplier(&field("tau_multiplier"), *tau_multiplier, false)?;
            check_multiplier(&field("phase_multiplier"), *phase_multiplier, false)?;
            check_multiplier(&field("lambda_multiplier"), *lambda_multiplier, true)?;
        }
        PolicySpec::Estor {
            t0,
            tau_multiplier,
            lambda_multiplier,
            ..
        } => {
            if *t0 == 0 {
                return Err(ConfigError::invalid(field("t0"), "must be at least 1"));
            }
            check_multiplier(&field("tau_multiplier"), *tau_multiplier, false)?;
            check_multiplier(&field("lambda_multiplier"), *lambda_multiplier, true)?;
        }
        PolicySpec::Gstor {
            tau_multiplier,
            phase_multiplier,
            bandwidth,
            window,
            ..
        } => {
            check_multiplier(&field("tau_multiplier"), *tau_multiplier, false)?;
            check_multiplier(&field("phase_multiplier"), *phase_multiplier, false)?;
            if let Some(h) = bandwidth {
                check_multiplier(&field("bandwidth"), *h, false)?;
            }
            if let Some(w) = window {
                check_multiplier(&field("window"), *w, false)?;
            }
        }
        PolicySpec::Linucb {
            alpha,
            alpha_multiplier,
            ridge,
            ..
        }
        | PolicySpec::UcbGlm {
            alpha,
            alpha_multiplier,
            ridge,
            ..
        } => {
            if let Some(a) = alpha {
                check_multiplier(&field("alpha"), *a, true)?;
            }
            check_multiplier(&field("alpha_multiplier"), *alpha_multiplier, true)?;
            check_multiplier(&field("ridge"), *ridge, false)?;
        }
        PolicySpec::Lints {
            v, v_multiplier, ridge, ..
        } => {
            if let Some(v) = v {
                check_multiplier(&field("v"), *v, true)?;
            }
            check_multiplier(&field("v_multiplier"), *v_multiplier, true)?;
            check_multiplier(&field("ridge"), *ridge, false)?;
        }
        PolicySpec::GlmTsl {
            scale,
            scale_multiplier,
            ridge,
            ..
        } => {
            if let Some(a) = scale {
                check_multiplier(&field("scale"), *a, true)?;
            }
            check_multiplier(&field("scale_multiplier"), *scale_multiplier, true)?;
            check_multiplier(&field("ridge"), *ridge, false)?;
        }
    }
    if let Some(model) = spec.model() {
        if parse_link(model).is_none() {
            return Err(ConfigError::invalid(field("model"), format!("unknown link `{model}`")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and validates an experiment document.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        if raw.name.is_empty() {
            return Err(ConfigError::invalid("name", "must not be empty"));
        }
        if raw.horizon == 0 {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        if raw.dim == 0 {
            return Err(ConfigError::invalid("dim", "must be at least 1"));
        }
        if raw.arms < 3 {
            return Err(ConfigError::invalid(
                "arms",
                format!("must be at least 3, got {}", raw.arms),
            ));
        }
        if !(raw.delta > 0.0 && raw.delta < 1.0) {
            return Err(ConfigError::invalid(
                "delta",
                format!("must lie in (0, 1), got {}", raw.delta),
            ));
        }
        if !(raw.noise_sigma >= 0.0 && raw.noise_sigma.is_finite()) {
            return Err(ConfigError::invalid(
                "noise_sigma",
                format!("must be non-negative, got {}", raw.noise_sigma),
            ));
        }
        if raw.repetitions == 0 {
            return Err(ConfigError::invalid("repetitions", "must be at least 1"));
        }
        if raw.thin == 0 {
            return Err(ConfigError::invalid("thin", "must be at least 1"));
        }
        if let Some(s) = raw.sparsity {
            if s == 0 || s > raw.dim {
                return Err(ConfigError::invalid(
                    "sparsity",
                    format!("must lie in 1..={}, got {s}", raw.dim),
                ));
            }
        }
        if let Some(c) = raw.poisson_clamp {
            check_multiplier("poisson_clamp", c, false)?;
        }
        let link = parse_link(&raw.link)
            .ok_or_else(|| ConfigError::invalid("link", format!("unknown link `{}`", raw.link)))?;
        if raw.policies.is_empty() {
            return Err(ConfigError::invalid(
                "policy",
                "at least one [[policy]] table is required",
            ));
        }
        let mut seen = HashSet::new();
        let mut policy_names = Vec::with_capacity(raw.policies.len());
        for (i, spec) in raw.policies.iter().enumerate() {
            check_policy(i, spec)?;
            let name = spec.display_name(&raw.link);
            if !seen.insert(name.clone()) {
                return Err(ConfigError::invalid(
                    format!("policy[{i}].name"),
                    format!("duplicate policy name `{name}`"),
                ));
            }
            policy_names.push(name);
        }
        let distribution = build_distribution(&raw.distribution, raw.dim)?;
        Ok(Self {
            name: raw.name,
            horizon: raw.horizon,
            dim: raw.dim,
            arms: raw.arms,
            delta: raw.delta,
            link,
            noise_sigma: raw.noise_sigma,
            sparsity: raw.sparsity,
            distribution,
            repetitions: raw.repetitions,
            master_seed: raw.master_seed,
            output: raw.output,
            thin: raw.thin,
            poisson_clamp: raw.poisson_clamp,
            policies: raw.policies,
            policy_names,
        })
    }

    /// Scale of the reward noise the linear and GLM baselines assume.
    pub fn noise_scale(&self) -> f64 {
        match self.link {
            LinkFunction::PoissonExp => 1.0,
            _ => self.noise_sigma,
        }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    ExperimentConfig::from_toml(&text, path)
}
