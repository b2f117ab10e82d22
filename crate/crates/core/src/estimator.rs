//! Truncated Stein's-identity estimator of the single index direction.
//!
//! Given pairs `(x_i, y_i)` with `x_i` drawn from a density with score `S`,
//! the estimator minimizes
//!
//! ```text
//! ||θ||² - (2/n) Σ_i φ_τ(y_i S(x_i))'θ + λ ||θ||₁
//! ```
//!
//! where `φ_τ` clips every coordinate to `[-τ, τ]`. With `b` the mean of the
//! clipped terms the objective separates by coordinate and its minimizer is
//! the soft threshold of `b` at `λ/2` (just `b` when `λ = 0`). One pass over
//! the batch, `O(nd)` time.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

/// Equal-length contexts and rewards, every context of the same dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBatch {
    contexts: Vec<DVector<f64>>,
    rewards: Vec<f64>,
}

impl SampleBatch {
    pub fn new(contexts: Vec<DVector<f64>>, rewards: Vec<f64>) -> Result<Self> {
        if contexts.len() != rewards.len() {
            return Err(Error::invalid(
                "rewards",
                format!("{} rewards for {} contexts", rewards.len(), contexts.len()),
            ));
        }
        if let Some(first) = contexts.first() {
            let d = first.len();
            for c in &contexts {
                check_dim(d, c.len())?;
            }
        }
        Ok(Self { contexts, rewards })
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            contexts: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, x: DVector<f64>, y: f64) -> Result<()> {
        if let Some(d) = self.dim() {
            check_dim(d, x.len())?;
        }
        self.contexts.push(x);
        self.rewards.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.contexts.first().map(|c| c.len())
    }

    pub fn contexts(&self) -> &[DVector<f64>] {
        &self.contexts
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DVector<f64>, f64)> {
        self.contexts.iter().zip(self.rewards.iter().copied())
    }

    pub fn clear(&mut self) {
        self.contexts.clear();
        self.rewards.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    tau: f64,
    lambda: f64,
}

impl EstimatorConfig {
    pub fn new(tau: f64, lambda: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("lambda", format!("must be non-negative, got {lambda}")));
        }
        Ok(Self { tau, lambda })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Estimate of `μ* θ*` where `μ* = E[f'(X'θ*)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta_hat: DVector<f64>,
    pub n_used: usize,
}

/// Coordinatewise `sign(v_j) · min(|v_j|, τ)`.
pub fn truncate(v: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    Ok(v.map(|x| x.clamp(-tau, tau)))
}

/// Coordinatewise `sign(b_j) · max(|b_j| - t, 0)`.
pub fn soft_threshold(b: &DVector<f64>, t: f64) -> DVector<f64> {
    b.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// Cascade (pairwise) summation of vectors in `O(d log n)` memory.
///
/// Slot `k` of the stack holds the sum of a block of `2^k` terms; pushing a
/// term merges equal-sized blocks like a binary counter increment.
#[derive(Debug, Clone)]
pub struct PairwiseSum {
    levels: Vec<(usize, DVector<f64>)>,
    count: usize,
}

impl PairwiseSum {
    pub fn new() -> Self {
        Self {
            levels: Vec::new(),
            count: 0,
        }
    }

    pub fn push(&mut self, v: DVector<f64>) {
        let mut block = (1usize, v);
        while let Some((size, _)) = self.levels.last() {
            if *size != block.0 {
                break;
            }
            let (size, top) = self.levels.pop().expect("checked non-empty");
            block = (size * 2, top + block.1);
        }
        self.levels.push(block);
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn total(&self) -> Option<DVector<f64>> {
        let mut it = self.levels.iter().rev();
        let (_, first) = it.next()?;
        Some(it.fold(first.clone(), |acc, (_, v)| acc + v))
    }
}

impl Default for PairwiseSum {
    fn default() -> Self {
        Self::new()
    }
}

/// Closed-form minimizer of the truncated Stein loss on `batch`.
///
/// `score_fn` must return the score of the density that generated the
/// contexts.
pub fn estimate<F>(batch: &SampleBatch, mut score_fn: F, config: EstimatorConfig) -> Result<Estimate>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let d = batch.dim().ok_or(Error::EmptyBatch)?;
    let tau = config.tau;
    let mut acc = PairwiseSum::new();
    for (x, y) in batch.iter() {
        let s = score_fn(x)?;
        check_dim(d, s.len())?;
        acc.push(s.map(|sj| (y * sj).clamp(-tau, tau)));
    }
    let n = acc.count();
    let b = acc.total().ok_or(Error::EmptyBatch)? / n as f64;
    let theta_hat = if config.lambda > 0.0 {
        soft_threshold(&b, config.lambda / 2.0)
    } else {
        b
    };
    Ok(Estimate { theta_hat, n_used: n })
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")))
    }
}

fn check_counts(n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    Ok(())
}

/// Truncation level `multiplier · sqrt(3 · proxy · n / ln(2d/δ))`.
///
/// `variance_proxy` stands for `(σ² + L_f²) M`; with `1` this is the constant
/// free level used by the bandit algorithms.
pub fn theoretical_tau(n: usize, d: usize, delta: f64, variance_proxy: f64, multiplier: f64) -> Result<f64> {
    check_delta(delta)?;
    check_counts(n, d)?;
    Ok(multiplier * (3.0 * variance_proxy * n as f64 / (2.0 * d as f64 / delta).ln()).sqrt())
}

/// Lasso weight `multiplier · 11 · sqrt(proxy · ln(2d/δ) / n)`.
pub fn theoretical_lambda(n: usize, d: usize, delta: f64, variance_proxy: f64, multiplier: f64) -> Result<f64> {
    check_delta(delta)?;
    check_counts(n, d)?;
    Ok(multiplier * 11.0 * (variance_proxy * (2.0 * d as f64 / delta).ln() / n as f64).sqrt())
}

/// Eigenvalues below this are raised to it before taking square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Symmetric square root `Σ^{1/2}` of a symmetric positive (semi)definite
/// matrix.
pub fn symmetric_sqrt(covariance: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = covariance.nrows();
    if covariance.ncols() != d || d == 0 {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = covariance.amax();
    for i in 0..d {
        for j in 0..i {
            if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    let eig = SymmetricEigen::new(covariance.clone());
    let max = eig.eigenvalues.max();
    if !(max > 0.0) || eig.eigenvalues.min() < -1e-10 * max {
        return Err(Error::NotPositiveDefinite);
    }
    let roots = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `θ̂ / ||Σ^{1/2} θ̂||₁` given a precomputed `Σ^{1/2}`.
pub fn normalize_with_sqrt(theta_hat: &DVector<f64>, sqrt_cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_dim(sqrt_cov.nrows(), theta_hat.len())?;
    if theta_hat.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroDirection);
    }
    let norm = (sqrt_cov * theta_hat).lp_norm(1);
    Ok(theta_hat / norm)
}

/// Rescales `θ̂` so that `||Σ^{1/2} θ̂||₁ = 1`.
pub fn gstor_normalize(theta_hat: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<DVector<f64>> {
    if theta_hat.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroDirection);
    }
    normalize_with_sqrt(theta_hat, &symmetric_sqrt(covariance)?)
}
