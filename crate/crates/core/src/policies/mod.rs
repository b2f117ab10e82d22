//! Sequential decision policies and the loop that plays them.
//!
//! Every policy sees the same protocol: `select` on the round's arm set, then
//! `observe` with the pulled context and its reward. The Stein's-oracle
//! policies ([`Stor`], [`Estor`], [`Gstor`]) never look at the link
//! function; the GLM baselines are told one.

mod baselines;
mod estor;
mod glm;
mod gstor;
mod stor;

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;

use crate::environment::{RoundOutcome, SibEnvironment};
use crate::error::{Error, Result};
use crate::rng::{stream, streams, SimRng};

pub use baselines::{confidence_radius, GlmTsl, LinTs, LinUcb, UcbGlm, UniformRandom, DEFAULT_RIDGE};
pub use estor::{EpochSchedule, EstimationRecord, Estor, EstorConfig, DEFAULT_T0};
pub use glm::{NewtonOptions, QuasiMle, SolveFailure};
pub use gstor::{Gstor, GstorConfig, GstorPhase};
pub use stor::{stor_exploration_length, Stor, StorConfig, DEFAULT_STOR_PHASE_MULTIPLIER};

/// Counters a policy exposes for reporting.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Diagnostics {
    /// Parameter estimates computed so far.
    pub estimates: usize,
    /// Solver runs that did not converge and kept the previous estimate.
    pub solver_failures: usize,
}

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Chooses an arm. Called exactly once per round, before [`Policy::observe`].
    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize>;

    /// Feeds back the pulled context and its reward.
    fn observe(&mut self, x: &DVector<f64>, reward: f64) -> Result<()>;

    /// Whether the most recent selection was a uniform exploration pull.
    fn exploring(&self) -> bool {
        false
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics::default()
    }
}

/// `argmax_j key(x_j)`, lowest index on ties.
pub fn argmax_by<F>(arm_set: &[DVector<f64>], mut key: F) -> usize
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let mut best = (0, f64::NEG_INFINITY);
    for (j, x) in arm_set.iter().enumerate() {
        let v = key(x);
        if v > best.1 {
            best = (j, v);
        }
    }
    best.0
}

/// `argmax_j x_j'θ`, lowest index on ties.
pub fn greedy_index(arm_set: &[DVector<f64>], theta: &DVector<f64>) -> usize {
    argmax_by(arm_set, |x| x.dot(theta))
}

pub(crate) fn uniform_index(rng: &mut SimRng, arms: usize) -> Result<usize> {
    if arms == 0 {
        return Err(Error::invalid("arm_set", "empty arm set"));
    }
    Ok(rng.random_range(0..arms))
}

pub(crate) fn check_arms(arm_set: &[DVector<f64>], d: usize) -> Result<()> {
    if arm_set.is_empty() {
        return Err(Error::invalid("arm_set", "empty arm set"));
    }
    for x in arm_set {
        crate::error::check_dim(d, x.len())?;
    }
    Ok(())
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")))
    }
}

/// Random streams an environment consumes during a run.
#[derive(Debug, Clone)]
pub struct EnvStreams {
    pub arms: SimRng,
    pub rewards: SimRng,
}

impl EnvStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            arms: stream(seed, streams::ARMS),
            rewards: stream(seed, streams::REWARDS),
        }
    }
}

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAbort {
    /// 1-based round at which the error occurred.
    pub round: usize,
    pub error: Error,
}

/// Per-round record of one policy run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTrace {
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub chosen: Vec<usize>,
    pub exploring: Vec<bool>,
    /// Time spent inside `select` and `observe` only.
    pub policy_time: Duration,
    pub diagnostics: Diagnostics,
    pub aborted: Option<RunAbort>,
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.instant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instant.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Cumulative regret after round `t` (1-based).
    pub fn regret_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.cumulative[t - 1]
        }
    }
}

/// Plays one round and returns its outcome.
pub fn play_round(
    policy: &mut dyn Policy,
    env: &SibEnvironment,
    streams: &mut EnvStreams,
    policy_time: &mut Duration,
) -> Result<RoundOutcome> {
    let arm_set = env.draw_round(&mut streams.arms);
    let start = Instant::now();
    let chosen_index = policy.select(&arm_set)?;
    *policy_time += start.elapsed();
    if chosen_index >= arm_set.len() {
        return Err(Error::IndexOutOfRange {
            index: chosen_index,
            arms: arm_set.len(),
        });
    }
    let reward = env.pull(&arm_set[chosen_index], &mut streams.rewards)?;
    let start = Instant::now();
    policy.observe(&arm_set[chosen_index], reward)?;
    *policy_time += start.elapsed();
    let instant_regret = env.instant_regret(&arm_set, chosen_index)?;
    Ok(RoundOutcome {
        arm_set,
        chosen_index,
        reward,
        instant_regret,
    })
}

/// Runs `policy` for `horizon` rounds against `env`.
///
/// A policy error stops the run; the trace up to the failing round is kept
/// and the error is attached.
pub fn run_policy(
    policy: &mut dyn Policy,
    env: &SibEnvironment,
    horizon: usize,
    streams: &mut EnvStreams,
) -> RegretTrace {
    let mut trace = RegretTrace {
        instant: Vec::with_capacity(horizon),
        cumulative: Vec::with_capacity(horizon),
        chosen: Vec::with_capacity(horizon),
        exploring: Vec::with_capacity(horizon),
        ..RegretTrace::default()
    };
    let mut total = 0.0;
    for t in 1..=horizon {
        match play_round(policy, env, streams, &mut trace.policy_time) {
            Ok(outcome) => {
                total += outcome.instant_regret;
                trace.instant.push(outcome.instant_regret);
                trace.cumulative.push(total);
                trace.chosen.push(outcome.chosen_index);
                trace.exploring.push(policy.exploring());
            }
            Err(error) => {
                trace.aborted = Some(RunAbort { round: t, error });
                break;
            }
        }
    }
    trace.diagnostics = policy.diagnostics();
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn argmax_breaks_ties_low() {
        let arms = vec![dvector![1.0], dvector![3.0], dvector![3.0]];
        assert_eq!(greedy_index(&arms, &dvector![1.0]), 1);
        assert_eq!(greedy_index(&arms, &dvector![0.0]), 0);
        assert_eq!(greedy_index(&arms, &dvector![-1.0]), 0);
    }

    #[test]
    fn greedy_is_scale_invariant() {
        let arms = vec![dvector![1.0, -2.0], dvector![0.5, 0.5], dvector![-1.0, 3.0]];
        let th = dvector![0.3, 0.7];
        for c in [1e-8, 0.5, 3.0, 1e6] {
            assert_eq!(greedy_index(&arms, &th), greedy_index(&arms, &(&th * c)));
        }
    }
}
