//! Comparison policies: uniform random, LinUCB, LinTS, UCB-GLM and GLM-TSL.
//!
//! The linear baselines keep ridge statistics `A = λI + Σ x x'`, `b = Σ y x`.
//! The GLM baselines refit the quasi-MLE of a declared link every round,
//! after a short uniform warm-up.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::glm::QuasiMle;
use super::{argmax_by, check_arms, uniform_index, Diagnostics, Policy};
use crate::environment::LinkFunction;
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const DEFAULT_RIDGE: f64 = 1.0;

/// `sqrt(d/2 · ln(1 + 2T/d) + ln(1/δ))`, the unscaled UCB width.
pub fn confidence_radius(d: usize, horizon: usize, delta: f64) -> f64 {
    let d = d as f64;
    (d / 2.0 * (1.0 + 2.0 * horizon as f64 / d).ln() + (1.0 / delta).ln()).sqrt()
}

fn sherman_morrison(a_inv: &mut DMatrix<f64>, x: &DVector<f64>) {
    let ax = &*a_inv * x;
    let denom = 1.0 + x.dot(&ax);
    a_inv.ger(-1.0 / denom, &ax, &ax, 1.0);
}

fn check_ridge(ridge: f64) -> Result<()> {
    if ridge > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("ridge", format!("must be positive, got {ridge}")))
    }
}

/// `θ̂ + scale · L^{-T} z` with `A = L L'`, a draw from `N(θ̂, scale² A^{-1})`.
fn perturb(gram: &DMatrix<f64>, centre: &DVector<f64>, scale: f64, rng: &mut SimRng) -> Result<DVector<f64>> {
    let chol = gram.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let z = DVector::from_fn(centre.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(centre + w * scale)
}

#[derive(Debug)]
pub struct UniformRandom {
    rng: SimRng,
}

impl UniformRandom {
    pub fn new(rng: SimRng) -> Self {
        Self { rng }
    }
}

impl Policy for UniformRandom {
    fn name(&self) -> &str {
        "Uniform"
    }

    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize> {
        uniform_index(&mut self.rng, arm_set.len())
    }

    fn observe(&mut self, _x: &DVector<f64>, _reward: f64) -> Result<()> {
        Ok(())
    }

    fn exploring(&self) -> bool {
        true
    }
}

/// Ridge regression with an upper confidence bonus `α ||x||_{A^{-1}}`.
#[derive(Debug, Clone)]
pub struct LinUcb {
    alpha: f64,
    a_inv: DMatrix<f64>,
    b: DVector<f64>,
    theta: DVector<f64>,
}

impl LinUcb {
    pub fn new(d: usize, alpha: f64, ridge: f64) -> Result<Self> {
        check_ridge(ridge)?;
        if !(alpha >= 0.0) {
            return Err(Error::invalid("alpha", "must be non-negative"));
        }
        Ok(Self {
            alpha,
            a_inv: DMatrix::identity(d, d) / ridge,
            b: DVector::zeros(d),
            theta: DVector::zeros(d),
        })
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.theta
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &str {
        "LinUCB"
    }

    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize> {
        check_arms(arm_set, self.b.len())?;
        let (theta, a_inv, alpha) = (&self.theta, &self.a_inv, self.alpha);
        Ok(argmax_by(arm_set, |x| {
            let width = if alpha > 0.0 {
                alpha * x.dot(&(a_inv * x)).max(0.0).sqrt()
            } else {
                0.0
            };
            x.dot(theta) + width
        }))
    }

    fn observe(&mut self, x: &DVector<f64>, reward: f64) -> Result<()> {
        sherman_morrison(&mut self.a_inv, x);
        self.b.axpy(reward, x, 1.0);
        self.theta = &self.a_inv * &self.b;
        Ok(())
    }
}

/// Linear Thompson sampling from `N(A^{-1}b, v² A^{-1})`.
#[derive(Debug, Clone)]
pub struct LinTs {
    v: f64,
    gram: DMatrix<f64>,
    b: DVector<f64>,
    rng: SimRng,
}

impl LinTs {
    pub fn new(d: usize, v: f64, ridge: f64, rng: SimRng) -> Result<Self> {
        check_ridge(ridge)?;
        if !(v >= 0.0) {
            return Err(Error::invalid("v", "must be non-negative"));
        }
        Ok(Self {
            v,
            gram: DMatrix::identity(d, d) * ridge,
            b: DVector::zeros(d),
            rng,
        })
    }
}

impl Policy for LinTs {
    fn name(&self) -> &str {
        "LinTS"
    }

    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize> {
        check_arms(arm_set, self.b.len())?;
        let chol = self.gram.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let mean = chol.solve(&self.b);
        let theta = perturb(&self.gram, &mean, self.v, &mut self.rng)?;
        Ok(argmax_by(arm_set, |x| x.dot(&theta)))
    }

    fn observe(&mut self, x: &DVector<f64>, reward: f64) -> Result<()> {
        self.gram.ger(1.0, x, x, 1.0);
        self.b.axpy(reward, x, 1.0);
        Ok(())
    }
}

/// Shared state of the GLM baselines.
#[derive(Debug, Clone)]
struct GlmState {
    model: LinkFunction,
    warmup: usize,
    solver: QuasiMle,
    gram: DMatrix<f64>,
    theta: DVector<f64>,
    round: usize,
    failures: usize,
    fits: usize,
    exploring: bool,
    rng: SimRng,
}

impl GlmState {
    fn new(d: usize, model: LinkFunction, ridge: f64, warmup: usize, rng: SimRng) -> Result<Self> {
        check_ridge(ridge)?;
        Ok(Self {
            model,
            warmup,
            solver: QuasiMle::new(d, ridge),
            gram: DMatrix::identity(d, d) * ridge,
            theta: DVector::zeros(d),
            round: 0,
            failures: 0,
            fits: 0,
            exploring: false,
            rng,
        })
    }

    fn warming_up(&self) -> bool {
        self.round < self.warmup
    }

    fn observe(&mut self, x: &DVector<f64>, reward: f64) {
        self.round += 1;
        self.solver.push(x, reward);
        self.gram.ger(1.0, x, x, 1.0);
        if !self.warming_up() {
            match self.solver.solve(&self.model, &self.theta) {
                Ok((theta, _)) => {
                    self.theta = theta;
                    self.fits += 1;
                }
                Err(_) => self.failures += 1,
            }
        }
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            estimates: self.fits,
            solver_failures: self.failures,
        }
    }
}

/// UCB-GLM: quasi-MLE under a declared link plus `α ||x||_{A^{-1}}`.
#[derive(Debug, Clone)]
pub struct UcbGlm {
    state: GlmState,
    alpha: f64,
    a_inv: DMatrix<f64>,
}

impl UcbGlm {
    pub fn new(d: usize, model: LinkFunction, alpha: f64, ridge: f64, warmup: usize, rng: SimRng) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::invalid("alpha", "must be non-negative"));
        }
        Ok(Self {
            state: GlmState::new(d, model, ridge, warmup, rng)?,
            alpha,
            a_inv: DMatrix::identity(d, d) / ridge,
        })
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.state.theta
    }

    pub fn model(&self) -> &LinkFunction {
        &self.state.model
    }
}

impl Policy for UcbGlm {
    fn name(&self) -> &str {
        "UCB-GLM"
    }

    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize> {
        check_arms(arm_set, self.state.theta.len())?;
        if self.state.warming_up() {
            self.state.exploring = true;
            return uniform_index(&mut self.state.rng, arm_set.len());
        }
        self.state.exploring = false;
        let (theta, a_inv, alpha) = (&self.state.theta, &self.a_inv, self.alpha);
        Ok(argmax_by(arm_set, |x| {
            x.dot(theta) + alpha * x.dot(&(a_inv * x)).max(0.0).sqrt()
        }))
    }

    fn observe(&mut self, x: &DVector<f64>, reward: f64) -> Result<()> {
        sherman_morrison(&mut self.a_inv, x);
        self.state.observe(x, reward);
        Ok(())
    }

    fn exploring(&self) -> bool {
        self.state.exploring
    }

    fn diagnostics(&self) -> Diagnostics {
        self.state.diagnostics()
    }
}

/// GLM-TSL: the quasi-MLE perturbed by `N(0, a² A^{-1})` each round.
#[derive(Debug, Clone)]
pub struct GlmTsl {
    state: GlmState,
    scale: f64,
}

impl GlmTsl {
    pub fn new(d: usize, model: LinkFunction, scale: f64, ridge: f64, warmup: usize, rng: SimRng) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::invalid("scale", "must be non-negative"));
        }
        Ok(Self {
            state: GlmState::new(d, model, ridge, warmup, rng)?,
            scale,
        })
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.state.theta
    }
}

impl Policy for GlmTsl {
    fn name(&self) -> &str {
        "GLM-TSL"
    }

    fn select(&mut self, arm_set: &[DVector<f64>]) -> Result<usize> {
        check_arms(arm_set, self.state.theta.len())?;
        if self.state.warming_up() {
            self.state.exploring = true;
            return uniform_index(&mut self.state.rng, arm_set.len());
        }
        self.state.exploring = false;
        let theta = perturb(&self.state.gram, &self.state.theta, self.scale, &mut self.state.rng)?;
        Ok(argmax_by(arm_set, |x| x.dot(&theta)))
    }

    fn observe(&mut self, x: &DVector<f64>, reward: f64) -> Result<()> {
        self.state.observe(x, reward);
        Ok(())
    }

    fn exploring(&self) -> bool {
        self.state.exploring
    }

    fn diagnostics(&self) -> Diagnostics {
        self.state.diagnostics()
    }
}
