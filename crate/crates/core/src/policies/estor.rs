use std::sync::Arc;

use nalgebra::DVector;

use super::{check_arms, check_delta, greedy_index, uniform_index, Diagnostics, Policy};
use crate::distribution::{ContextDistribution, EpochScore};
use crate::error::{Error, Result};
use crate::estimator::{estimate, theoretical_lambda, theoretical_tau, EstimatorConfig, SampleBatch};
use crate::rng::SimRng;

pub const DEFAULT_T0: usize = 50;

/// Epoch boundaries `e_i = (2^i - 1) T0`, so epoch `i` covers rounds
/// `e_{i-1} + 1 ..= e_i` and has length `2^{i-1} T0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochSchedule {
    t0: usize,
}

impl EpochSchedule {
    pub fn new(t0: usize) -> Result<Self> {
        if t0 == 0 {
            return Err(Error::invalid("t0", "must be at least 1"));
        }
        Ok(Self { t0 })
    }

    pub fn t0(&self) -> usize {
        self.t0
    }

    /// `e_i`; saturates instead of overflowing.
    pub fn boundary(&self, i: usize) -> usize {
        if i >= usize::BITS as usize {
            return usize::MAX;
        }
        ((1usize << i) - 1).saturating_mul(self.t0)
    }

    /// `e_i - e_{i-1}` for `i >= 1`.
    pub fn length(&self, i: usize) -> usize {
        assert!(i >= 1, "epochs are numbered from 1");
        self.boundary(i) - self.boundary(i - 1)
    }

    /// Epoch containing the 1-based round `t`.
    pub fn epoch_of(&self, t: usize) -> usize {
        let mut i = 1;
        while self.boundary(i) < t {
            i += 1;
        }
        i
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstorConfig {
    pub horizon: usize,
    pub arms: usize,
    pub delta: f64,
    pub t0: usize,
    pub tau_multiplier: f64,
    /// Zero disables the ℓ1 penalty.
    pub lambda_multiplier: f64,
}

impl EstorConfig {
    pub fn new(horizon: usize, arms: usize, delta: f64) -> Self {
        Self {
            horizon,
            arms,
            delta,
            t0: DEFAULT_T0,
            tau_multiplier: 1.0,
            lambda_multiplier: 0.0,
        }
    }
}

/// Which samples produced the estimate used in one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRecord {
    /// Epoch that uses the estimate.
    pub epoch: usize,
    /// 1-based rounds `first_round ..= last_round` fed to the estimator.
    pub first_round: usize,
    pub last_round: usize,
    pub n_used: usize,
    pub tau: f64,
    pub lambda: f64,
    /// Whether the score of the greedy-arm density was used.
    pub epoch_density: bool,
}

/// Epoched explore-then-commit.
///
/// Epoch 1 pulls uniformly. At the end of each epoch the estimate for the
/// next one is formed from that epoch's samples alone, using the score of the
/// density the arms were actually drawn from: the base law after the uniform
/// epoch, the greedy-arm law `K p F^(K-1)` along the previous estimate after a
/// greedy one.
#[derive(Debug)]
pub struct Estor {
    dist: Arc<dyn ContextDistribution>,
    config: EstorConfig,
    schedule: EpochSchedule,
    delta_tau: f64,
    round: usize,
    epoch: usize,
    buffer: SampleBatch,
    theta: Option<DVector<f64>>,
    log: Vec<EstimationRecord>,
    exploring: bool,
    rng: SimRng,
}

impl Estor {
    pub fn new(config: EstorConfig, dist: Arc<dyn ContextDistribution>, rng: SimRng) -> Result<Self> {
        check_delta(config.delta)?;
        let schedule = EpochSchedule::new(config.t0)?;
        if config.arms == 0 {
            return Err(Error::invalid("arms", "must be at least 1"));
        }
        if config.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if !(config.tau_multiplier > 0.0) {
            return Err(Error::invalid("tau_multiplier", "must be positive"));
        }
        if !(config.lambda_multiplier >= 0.0) {
            return Err(Error::invalid("lambda_multiplier", "must be non-negative"));
        }
        // union bound over the log2(T) epochs
        let delta_tau = config.delta / (config.horizon as f64).log2().max(1.0);
        Ok(Self {
            dist,
            config,
            schedule,
            delta_tau,
            round: 0,
            epoch: 1,
            buffer: SampleBatch::with_capacity(config.t0),
            theta: None,
            log: Vec::new(),
            exploring: false,
            rng,
        })
    }

    pub fn schedule(&self) -> EpochSchedule {
        self.schedule
    }

    pub fn current_epoch(&self) -> usize {
        self.epoch
    }

    pub fn estimate(&self) -> Option<&DVector<f64>> {
        self.theta.as_ref()
    }

    pub fn estimation_log(&self) -> &[EstimationRecord] {
        &self.log
    }

    /// Multiplies the current estimate by `c`.
    pub fn rescale_estimate(&mut self, c: f64) {
        if let Some(t) = self.theta.as_mut() {
            *t *= c;
        }
    }

    fn close_epoch(&mut self) -> Result<()> {
        let d = self.dist.dim();
        let n = self.buffer.len();
        let tau = theoretical_tau(n, d, self.delta_tau, 1.0, self.config.tau_multiplier)?;
        let lambda = if self.config.lambda_multiplier > 0.0 {
            self.config.lambda_multiplier * theoretical_lambda(n, d, self.config.delta, 1.0, 1.0)?
        } else {
            0.0
        };
        let cfg = EstimatorConfig::new(tau, lambda)?;
        let dist = self.dist.as_ref();
        // exact zero estimates carry no direction, fall back to the base score
        let greedy_law = match &self.theta {
            Some(t) if t.iter().any(|v| *v != 0.0) => Some(EpochScore::new(dist, t, self.config.arms)?),
            _ => None,
        };
        let est = match &greedy_law {
            Some(score) => estimate(&self.buffer, |x| score.eval(x), cfg)?,
            None => estimate(&self.buffer, |x| dist.score(x), cfg)?,
        };
        self.log.push(EstimationRecord {
            epoch: self.epoch + 1,
            first_round: self.schedule.boundary(self.epoch - 1) + 1,
            last_round: self.round,
            n_used: est.n_used,
            tau,
            lambda,
            epoch_density: greedy_law.is_some(),
        });
        self.theta = Some(est.theta_hat);
        self.epoch += 1;
        self.buffer.clear();
        Ok(())
    }
}

impl Policy for Estor {
    fn name(&self) -> &str {
        "ESTOR"
    }

    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize> {
        check_arms(arm_set, self.dist.dim())?;
        if arm_set.len() != self.config.arms {
            return Err(Error::invalid(
                "arm_set",
                format!("expected {} arms, got {}", self.config.arms, arm_set.len()),
            ));
        }
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
        self.buffer.push(x.clone(), reward)?;
        if self.round == self.schedule.boundary(self.epoch) && self.round < self.config.horizon {
            self.close_epoch()?;
        }
        Ok(())
    }

    fn exploring(&self) -> bool {
        self.exploring
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            estimates: self.log.len(),
            solver_failures: 0,
        }
    }
}
