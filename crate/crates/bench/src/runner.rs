//! Seeded repetitions of an experiment grid.
//!
//! Repetition `r` of every policy plays against the same environment: `θ*`,
//! arm sets and reward noise come from `split_seed(master, ENV, r)`, so
//! policies are compared on matched seeds. Each policy's own randomness
//! comes from `split_seed(master, name_tag(name), r)`, which keeps a
//! policy's stream fixed when others are added or removed.

use std::sync::Arc;

use rayon::prelude::*;
use sib_core::policies::{
    confidence_radius, Estor, EstorConfig, GlmTsl, Gstor, GstorConfig, LinTs, LinUcb, Stor, StorConfig, UcbGlm,
    UniformRandom,
};
use sib_core::{
    name_tag, run_policy, split_seed, stream, streams, theoretical_lambda, ContextDistribution, Diagnostics,
    EnvStreams, Policy, RegretTrace, SibEnvironment,
};

use crate::config::{parse_link, ExperimentConfig, PolicySpec};

/// Seed tag of the environment streams.
pub fn environment_tag() -> u64 {
    name_tag("environment")
}

pub fn environment_seed(master: u64, repetition: usize) -> u64 {
    split_seed(master, environment_tag(), repetition as u64)
}

pub fn policy_seed(master: u64, policy: &str, repetition: usize) -> u64 {
    split_seed(master, name_tag(policy), repetition as u64)
}

/// One (policy, repetition) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: String,
    pub policy: String,
    pub repetition: usize,
    /// Seed of the policy's own stream.
    pub seed: u64,
    /// `(t, R_t)` at every multiple of the thinning stride and at the last round.
    pub trace: Vec<(usize, f64)>,
    pub final_regret: f64,
    pub policy_seconds: f64,
    pub diagnostics: Diagnostics,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.error.is_none()
    }
}

/// Rounds kept by a stride-`thin` trace of `len` rounds.
pub fn thinned_rounds(len: usize, thin: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (1..=len / thin).map(|k| k * thin).collect();
    if len > 0 && ts.last() != Some(&len) {
        ts.push(len);
    }
    ts
}

pub fn build_environment(config: &ExperimentConfig, repetition: usize) -> sib_core::Result<SibEnvironment> {
    let seed = environment_seed(config.master_seed, repetition);
    let env = SibEnvironment::generate(
        Arc::clone(&config.distribution),
        config.arms,
        config.link.clone(),
        config.noise_sigma,
        config.sparsity,
        &mut stream(seed, streams::THETA),
    )?;
    match config.poisson_clamp {
        Some(c) => env.with_clamp(c),
        None => Ok(env),
    }
}

fn glm_model(config: &ExperimentConfig, model: &Option<String>) -> sib_core::LinkFunction {
    match model {
        Some(name) => parse_link(name).expect("validated at load time"),
        None => config.link.clone(),
    }
}

/// Instantiates policy `index` for `repetition`.
pub fn build_policy(config: &ExperimentConfig, index: usize, repetition: usize) -> sib_core::Result<Box<dyn Policy>> {
    let name = &config.policy_names[index];
    let rng = stream(policy_seed(config.master_seed, name, repetition), streams::POLICY);
    let dist: Arc<dyn ContextDistribution> = Arc::clone(&config.distribution);
    let (d, horizon, delta) = (config.dim, config.horizon, config.delta);
    let radius = config.noise_scale() * confidence_radius(d, horizon, delta);
    let policy: Box<dyn Policy> = match &config.policies[index] {
        PolicySpec::Uniform { .. } => Box::new(UniformRandom::new(rng)),
        PolicySpec::Stor {
            tau_multiplier,
            phase_multiplier,
            lambda_multiplier,
            ..
        } => {
            let mut c = StorConfig::new(horizon, delta);
            c.tau_multiplier = *tau_multiplier;
            c.phase_multiplier = *phase_multiplier;
            if *lambda_multiplier > 0.0 {
                let t1 = sib_core::policies::stor_exploration_length(horizon, d, delta, *phase_multiplier)?;
                c.lambda = theoretical_lambda(t1, d, delta, 1.0, *lambda_multiplier)?;
            }
            Box::new(Stor::new(c, dist, rng)?)
        }
        PolicySpec::Estor {
            t0,
            tau_multiplier,
            lambda_multiplier,
            ..
        } => {
            let mut c = EstorConfig::new(horizon, config.arms, delta);
            c.t0 = *t0;
            c.tau_multiplier = *tau_multiplier;
            c.lambda_multiplier = *lambda_multiplier;
            Box::new(Estor::new(c, dist, rng)?)
        }
        PolicySpec::Gstor {
            tau_multiplier,
            phase_multiplier,
            bandwidth,
            window,
            ..
        } => {
            let mut c = GstorConfig::new(horizon, delta);
            c.tau_multiplier = *tau_multiplier;
            c.phase_multiplier = *phase_multiplier;
            c.bandwidth = *bandwidth;
            c.window = *window;
            Box::new(Gstor::new(c, dist, rng)?)
        }
        PolicySpec::Linucb {
            alpha,
            alpha_multiplier,
            ridge,
            ..
        } => Box::new(LinUcb::new(d, alpha.unwrap_or(radius) * alpha_multiplier, *ridge)?),
        PolicySpec::Lints {
            v, v_multiplier, ridge, ..
        } => Box::new(LinTs::new(d, v.unwrap_or(radius) * v_multiplier, *ridge, rng)?),
        PolicySpec::UcbGlm {
            model,
            alpha,
            alpha_multiplier,
            ridge,
            warmup,
            ..
        } => Box::new(UcbGlm::new(
            d,
            glm_model(config, model),
            alpha.unwrap_or(radius) * alpha_multiplier,
            *ridge,
            warmup.unwrap_or(d),
            rng,
        )?),
        PolicySpec::GlmTsl {
            model,
            scale,
            scale_multiplier,
            ridge,
            warmup,
            ..
        } => Box::new(GlmTsl::new(
            d,
            glm_model(config, model),
            scale.unwrap_or(radius) * scale_multiplier,
            *ridge,
            warmup.unwrap_or(d),
            rng,
        )?),
    };
    Ok(policy)
}

/// Full per-round trace of policy `index` in `repetition`.
pub fn run_trace(config: &ExperimentConfig, index: usize, repetition: usize) -> sib_core::Result<RegretTrace> {
    let env = build_environment(config, repetition)?;
    let mut policy = build_policy(config, index, repetition)?;
    let mut env_streams = EnvStreams::new(environment_seed(config.master_seed, repetition));
    Ok(run_policy(policy.as_mut(), &env, config.horizon, &mut env_streams))
}

/// Builds every environment and policy of repetition 0 without playing.
pub fn dry_run(config: &ExperimentConfig) -> Vec<(String, sib_core::Result<()>)> {
    let env = build_environment(config, 0).map(|_| ());
    config
        .policy_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let checked = env.clone().and_then(|_| build_policy(config, i, 0).map(|_| ()));
            (name.clone(), checked)
        })
        .collect()
}

fn run_one(config: &ExperimentConfig, index: usize, repetition: usize) -> RunRecord {
    let policy = config.policy_names[index].clone();
    let seed = policy_seed(config.master_seed, &policy, repetition);
    let mut record = RunRecord {
        experiment: config.name.clone(),
        policy,
        repetition,
        seed,
        trace: Vec::new(),
        final_regret: 0.0,
        policy_seconds: 0.0,
        diagnostics: Diagnostics::default(),
        error: None,
    };
    match run_trace(config, index, repetition) {
        Ok(trace) => {
            record.trace = thinned_rounds(trace.len(), config.thin)
                .into_iter()
                .map(|t| (t, trace.regret_at(t)))
                .collect();
            record.final_regret = trace.final_regret();
            record.policy_seconds = trace.policy_time.as_secs_f64();
            record.diagnostics = trace.diagnostics;
            record.error = trace.aborted.map(|a| format!("round {}: {}", a.round, a.error));
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

#[derive(Debug, thiserror::Error)]
#[error("cannot start worker pool: {0}")]
pub struct PoolError(#[from] rayon::ThreadPoolBuildError);

/// Runs every (policy, repetition) pair on `workers` threads and returns the
/// records in (policy, repetition) order. `workers = 0` uses all cores.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunRecord>, PoolError> {
    let tasks: Vec<(usize, usize)> = (0..config.policies.len())
        .flat_map(|i| (0..config.repetitions).map(move |r| (i, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(|| tasks.par_iter().map(|&(i, r)| run_one(config, i, r)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_keeps_the_last_round() {
        assert_eq!(thinned_rounds(10, 10), vec![10]);
        assert_eq!(thinned_rounds(25, 10), vec![10, 20, 25]);
        assert_eq!(thinned_rounds(3, 10), vec![3]);
        assert!(thinned_rounds(0, 10).is_empty());
    }

    #[test]
    fn seeds_separate_policies_and_repetitions() {
        assert_ne!(policy_seed(7, "STOR", 0), policy_seed(7, "ESTOR", 0));
        assert_ne!(policy_seed(7, "STOR", 0), policy_seed(7, "STOR", 1));
        assert_ne!(environment_seed(7, 0), environment_seed(8, 0));
    }
}
