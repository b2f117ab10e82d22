use std::ops::RangeInclusive;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{argmax_by, check_arms, check_delta, uniform_index, Diagnostics, Policy};
use crate::distribution::ContextDistribution;
use crate::error::{Error, Result};
use crate::estimator::{estimate, normalize_with_sqrt, symmetric_sqrt, theoretical_tau, EstimatorConfig, SampleBatch};
use crate::kernel::KernelFit;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GstorConfig {
    pub horizon: usize,
    pub delta: f64,
    pub tau_multiplier: f64,
    pub phase_multiplier: f64,
    /// Kernel half-width; `T1^{-1/3}` when unset.
    pub bandwidth: Option<f64>,
    /// Window around `μ_X'θ̂0`; `2 ln T1` when unset.
    pub window: Option<f64>,
}

impl GstorConfig {
    pub fn new(horizon: usize, delta: f64) -> Self {
        Self {
            horizon,
            delta,
            tau_multiplier: 1.0,
            phase_multiplier: 1.0,
            bandwidth: None,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GstorPhase {
    /// Uniform pulls feeding the direction estimate.
    ParameterExploration,
    /// Uniform pulls feeding the link regression.
    LinkExploration,
    Commit,
}

/// Double explore-then-commit for links of unknown shape.
///
/// Rounds `1..=T1` estimate the direction, which is normalized to
/// `||Σ^{1/2} θ̂0||₁ = 1`; rounds `T1+1..=2T1` fit a uniform-kernel regression
/// of the reward on `x'θ̂0`; afterwards the arm maximizing the fitted link is
/// pulled.
#[derive(Debug)]
pub struct Gstor {
    dist: Arc<dyn ContextDistribution>,
    sqrt_cov: DMatrix<f64>,
    exploration: usize,
    estimator: EstimatorConfig,
    bandwidth: f64,
    window: f64,
    round: usize,
    batch: SampleBatch,
    theta_hat: Option<DVector<f64>>,
    theta0: Option<DVector<f64>>,
    fit: Option<KernelFit>,
    exploring: bool,
    rng: SimRng,
}

impl Gstor {
    /// `ceil(d^{3/8} T^{3/4} · phase_multiplier)`.
    pub fn exploration_length_for(horizon: usize, d: usize, phase_multiplier: f64) -> usize {
        let raw = (d as f64).powf(0.375) * (horizon as f64).powf(0.75) * phase_multiplier;
        (raw.ceil() as usize).max(1)
    }

    pub fn new(config: GstorConfig, dist: Arc<dyn ContextDistribution>, rng: SimRng) -> Result<Self> {
        check_delta(config.delta)?;
        if !(config.phase_multiplier > 0.0) {
            return Err(Error::invalid("phase_multiplier", "must be positive"));
        }
        let d = dist.dim();
        let exploration = Self::exploration_length_for(config.horizon, d, config.phase_multiplier);
        if 2 * exploration >= config.horizon {
            return Err(Error::ExplorationExceedsHorizon {
                exploration: 2 * exploration,
                horizon: config.horizon,
            });
        }
        let t1 = exploration as f64;
        let bandwidth = config.bandwidth.unwrap_or(t1.powf(-1.0 / 3.0));
        let window = config.window.unwrap_or(2.0 * t1.ln());
        if !(bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth", "must be positive"));
        }
        if !(window > 0.0) {
            return Err(Error::invalid("window", "must be positive"));
        }
        let tau = theoretical_tau(exploration, d, config.delta, 1.0, config.tau_multiplier)?;
        Ok(Self {
            sqrt_cov: symmetric_sqrt(dist.covariance())?,
            dist,
            exploration,
            estimator: EstimatorConfig::new(tau, 0.0)?,
            bandwidth,
            window,
            round: 0,
            batch: SampleBatch::with_capacity(exploration),
            theta_hat: None,
            theta0: None,
            fit: None,
            exploring: false,
            rng,
        })
    }

    pub fn exploration_length(&self) -> usize {
        self.exploration
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn phase(&self) -> GstorPhase {
        if self.round < self.exploration {
            GstorPhase::ParameterExploration
        } else if self.round < 2 * self.exploration {
            GstorPhase::LinkExploration
        } else {
            GstorPhase::Commit
        }
    }

    /// Rounds feeding the direction estimate and the link regression.
    pub fn batch_rounds(&self) -> (RangeInclusive<usize>, RangeInclusive<usize>) {
        let t1 = self.exploration;
        (1..=t1, t1 + 1..=2 * t1)
    }

    pub fn raw_estimate(&self) -> Option<&DVector<f64>> {
        self.theta_hat.as_ref()
    }

    pub fn normalized_estimate(&self) -> Option<&DVector<f64>> {
        self.theta0.as_ref()
    }

    pub fn kernel_fit(&self) -> Option<&KernelFit> {
        self.fit.as_ref()
    }
}

impl Policy for Gstor {
    fn name(&self) -> &str {
        "GSTOR"
    }

    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize> {
        check_arms(arm_set, self.dist.dim())?;
        match (&self.fit, &self.theta0) {
            (Some(fit), Some(theta0)) => {
                self.exploring = false;
                Ok(argmax_by(arm_set, |x| fit.predict(x.dot(theta0))))
            }
            _ => {
                self.exploring = true;
                uniform_index(&mut self.rng, arm_set.len())
            }
        }
    }

    fn observe(&mut self, x: &DVector<f64>, reward: f64) -> Result<()> {
        let phase = self.phase();
        self.round += 1;
        match phase {
            GstorPhase::ParameterExploration => {
                self.batch.push(x.clone(), reward)?;
                if self.round == self.exploration {
                    let dist = &self.dist;
                    let est = estimate(&self.batch, |x| dist.score(x), self.estimator)?;
                    let theta0 = match normalize_with_sqrt(&est.theta_hat, &self.sqrt_cov) {
                        Ok(t) => t,
                        // no direction was learned; commit will see all-equal predictions
                        Err(Error::ZeroDirection) => est.theta_hat.clone(),
                        Err(e) => return Err(e),
                    };
                    self.theta_hat = Some(est.theta_hat);
                    self.theta0 = Some(theta0);
                    self.batch.clear();
                }
            }
            GstorPhase::LinkExploration => {
                self.batch.push(x.clone(), reward)?;
                if self.round == 2 * self.exploration {
                    let theta0 = self.theta0.as_ref().expect("set at the end of the first phase");
                    let center = self.dist.mean().dot(theta0);
                    self.fit = Some(KernelFit::fit(
                        &self.batch,
                        theta0,
                        self.bandwidth,
                        self.window,
                        center,
                    )?);
                    self.batch = SampleBatch::default();
                }
            }
            GstorPhase::Commit => {}
        }
        Ok(())
    }

    fn exploring(&self) -> bool {
        self.exploring
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            estimates: usize::from(self.theta_hat.is_some()) + usize::from(self.fit.is_some()),
            solver_failures: 0,
        }
    }
}
