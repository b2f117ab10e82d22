use std::sync::Arc;

use nalgebra::DVector;

use super::{check_arms, check_delta, greedy_index, uniform_index, Diagnostics, Policy};
use crate::distribution::ContextDistribution;
use crate::error::{Error, Result};
use crate::estimator::{estimate, theoretical_tau, EstimatorConfig, SampleBatch};
use crate::rng::SimRng;

/// Scaling applied to `(dT)^{2/3} ln(2d/δ)^{1/3}` by default.
pub const DEFAULT_STOR_PHASE_MULTIPLIER: f64 = 0.125;

/// `ceil((dT)^{2/3} ln(2d/δ)^{1/3} · phase_multiplier)`.
pub fn stor_exploration_length(horizon: usize, d: usize, delta: f64, phase_multiplier: f64) -> Result<usize> {
    check_delta(delta)?;
    if !(phase_multiplier > 0.0) {
        return Err(Error::invalid(
            "phase_multiplier",
            format!("must be positive, got {phase_multiplier}"),
        ));
    }
    let dt = (d * horizon) as f64;
    let raw = dt.powf(2.0 / 3.0) * (2.0 * d as f64 / delta).ln().cbrt() * phase_multiplier;
    Ok((raw.ceil() as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorConfig {
    pub horizon: usize,
    pub delta: f64,
    pub tau_multiplier: f64,
    /// ℓ1 weight; positive values give the sparse variant.
    pub lambda: f64,
    pub phase_multiplier: f64,
}

impl StorConfig {
    pub fn new(horizon: usize, delta: f64) -> Self {
        Self {
            horizon,
            delta,
            tau_multiplier: 1.0,
            lambda: 0.0,
            phase_multiplier: DEFAULT_STOR_PHASE_MULTIPLIER,
        }
    }
}

/// Explore-then-commit with a single Stein's-oracle estimate.
///
/// The first `T1` rounds pull uniformly at random; the estimate is formed
/// once from those `T1` samples and every later round is greedy in `x'θ̂`.
#[derive(Debug)]
pub struct Stor {
    dist: Arc<dyn ContextDistribution>,
    exploration: usize,
    estimator: EstimatorConfig,
    batch: SampleBatch,
    theta: Option<DVector<f64>>,
    round: usize,
    exploring: bool,
    rng: SimRng,
}

impl Stor {
    pub fn new(config: StorConfig, dist: Arc<dyn ContextDistribution>, rng: SimRng) -> Result<Self> {
        let d = dist.dim();
        let exploration = stor_exploration_length(config.horizon, d, config.delta, config.phase_multiplier)?;
        if exploration >= config.horizon {
            return Err(Error::ExplorationExceedsHorizon {
                exploration,
                horizon: config.horizon,
            });
        }
        let tau = theoretical_tau(exploration, d, config.delta, 1.0, config.tau_multiplier)?;
        Ok(Self {
            dist,
            exploration,
            estimator: EstimatorConfig::new(tau, config.lambda)?,
            batch: SampleBatch::with_capacity(exploration),
            theta: None,
            round: 0,
            exploring: false,
            rng,
        })
    }

    pub fn exploration_length(&self) -> usize {
        self.exploration
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        self.estimator
    }

    pub fn estimate(&self) -> Option<&DVector<f64>> {
        self.theta.as_ref()
    }

    /// Multiplies the committed estimate by `c`.
    pub fn rescale_estimate(&mut self, c: f64) {
        if let Some(t) = self.theta.as_mut() {
            *t *= c;
        }
    }
}

impl Policy for Stor {
    fn name(&self) -> &str {
        "STOR"
    }

    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize> {
        check_arms(arm_set, self.dist.dim())?;
        match &self.theta {
            Some(theta) => {
                self.exploring = false;
                Ok(greedy_index(arm_set, theta))
            }
            None => {
                self.exploring = true;
                uniform_index(&mut self.rng, arm_set.len())
            }
        }
    }

    fn observe(&mut self, x: &DVector<f64>, reward: f64) -> Result<()> {
        self.round += 1;
        if self.theta.is_none() {
            self.batch.push(x.clone(), reward)?;
            if self.batch.len() == self.exploration {
                let dist = &self.dist;
                let est = estimate(&self.batch, |x| dist.score(x), self.estimator)?;
                self.theta = Some(est.theta_hat);
                self.batch = SampleBatch::default();
            }
        }
        Ok(())
    }

    fn exploring(&self) -> bool {
        self.exploring
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            estimates: usize::from(self.theta.is_some()),
            solver_failures: 0,
        }
    }
}
