//! Context distributions and their score functions.
//!
//! Arm feature vectors are drawn i.i.d. from a known law `D` with density `p`.
//! The estimators in [`crate::estimator`] need the score `S(x) = -∇ log p(x)`
//! of whichever density generated the pulled arms. Under greedy selection over
//! `K` i.i.d. candidates the pulled arm follows `K p(x) F(x'θ)^(K-1)` instead
//! of `p`, and [`EpochScore`] evaluates the score of that density.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Debug;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{check_dim, Error, Result};
use crate::rng::SimRng;

/// A context law the simulator can sample from and differentiate.
///
/// Implementations are immutable after construction and shared between
/// threads; randomness always comes from the caller's stream.
pub trait ContextDistribution: Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut SimRng) -> DVector<f64>;

    /// `-∇ log p(x)`.
    fn score(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Law of the scalar projection `X'θ`.
    fn projection_law(&self, theta: &DVector<f64>) -> Result<ProjectionLaw>;

    /// Upper bound on `E[S_j(X)^2]` over coordinates.
    fn score_moment_bound(&self) -> f64;

    fn mean(&self) -> &DVector<f64>;

    fn covariance(&self) -> &DMatrix<f64>;
}

/// Multivariate normal `N(mean, covariance)`.
#[derive(Debug, Clone)]
pub struct GaussianContext {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    precision: DMatrix<f64>,
    identity_precision: bool,
    score_moment_bound: f64,
}

impl GaussianContext {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("mean", "dimension must be at least 1"));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: covariance.nrows().max(covariance.ncols()),
            });
        }
        if !is_symmetric(&covariance) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol: Cholesky<f64, Dyn> = Cholesky::new(covariance.clone()).ok_or(Error::NotPositiveDefinite)?;
        let precision = chol.inverse();
        let cholesky = chol.unpack();
        if cholesky.diagonal().iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let identity_precision = covariance == DMatrix::identity(d, d);
        // E[S_j^2] = (Σ^{-1} Σ Σ^{-1})_jj = (Σ^{-1})_jj.
        let score_moment_bound = precision.diagonal().iter().copied().fold(0.0, f64::max);
        Ok(Self {
            mean,
            covariance,
            cholesky,
            precision,
            identity_precision,
            score_moment_bound,
        })
    }

    /// Standard normal in `d` dimensions.
    pub fn standard(d: usize) -> Result<Self> {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d))
    }

    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

impl ContextDistribution for GaussianContext {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, rng: &mut SimRng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        if self.identity_precision {
            z + &self.mean
        } else {
            &self.cholesky * z + &self.mean
        }
    }

    fn score(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        let centered = x - &self.mean;
        if self.identity_precision {
            Ok(centered)
        } else {
            Ok(&self.precision * centered)
        }
    }

    fn projection_law(&self, theta: &DVector<f64>) -> Result<ProjectionLaw> {
        check_dim(self.dim(), theta.len())?;
        if theta.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroDirection);
        }
        let mean = self.mean.dot(theta);
        let var = (&self.covariance * theta).dot(theta);
        ProjectionLaw::new(mean, var.sqrt())
    }

    fn score_moment_bound(&self) -> f64 {
        self.score_moment_bound
    }

    fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// Univariate normal law of a projection `X'θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionLaw {
    pub mean: f64,
    pub std_dev: f64,
}

impl ProjectionLaw {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self> {
        if !(std_dev > 0.0) || !std_dev.is_finite() || !mean.is_finite() {
            return Err(Error::invalid(
                "std_dev",
                format!("must be positive and finite, got {std_dev}"),
            ));
        }
        Ok(Self { mean, std_dev })
    }

    pub fn standardize(&self, z: f64) -> f64 {
        (z - self.mean) / self.std_dev
    }

    pub fn pdf(&self, z: f64) -> f64 {
        std_normal_pdf(self.standardize(z)) / self.std_dev
    }

    pub fn cdf(&self, z: f64) -> f64 {
        std_normal_cdf(self.standardize(z))
    }

    /// Inverse cdf, for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.mean + self.std_dev * std_normal_quantile(p)
    }
}

pub(crate) fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

pub(crate) fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / SQRT_2)
}

pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Cdf values below this are treated as underflowed.
pub const CDF_FLOOR: f64 = 1e-300;
/// Quantile at which the clamped density/cdf ratio is evaluated.
pub const CLAMP_QUANTILE: f64 = 1e-12;

/// Score of the density of the greedy arm `argmax_j x_j'θ̂` among `K` i.i.d.
/// draws from a base law:
///
/// ```text
/// p_K(x) = K p(x) F0(x'θ̂)^(K-1)
/// S_K(x) = S(x) - (K-1) p0(x'θ̂) / F0(x'θ̂) θ̂
/// ```
///
/// with `p0`, `F0` the pdf and cdf of `X'θ̂`. The ratio `p0/F0 · θ̂` is
/// evaluated on the standardized projection, so the result is unchanged by
/// any positive rescaling of `θ̂`.
#[derive(Debug, Clone)]
pub struct EpochScore<'a> {
    dist: &'a dyn ContextDistribution,
    law: ProjectionLaw,
    theta_hat: DVector<f64>,
    // (K-1) θ̂ / sd(X'θ̂)
    correction: DVector<f64>,
    clamped_ratio: f64,
}

impl<'a> EpochScore<'a> {
    pub fn new(dist: &'a dyn ContextDistribution, theta_hat: &DVector<f64>, arms: usize) -> Result<Self> {
        if arms == 0 {
            return Err(Error::invalid("arms", "must be at least 1"));
        }
        let law = dist.projection_law(theta_hat)?;
        let correction = theta_hat * ((arms - 1) as f64 / law.std_dev);
        let uq = std_normal_quantile(CLAMP_QUANTILE);
        let clamped_ratio = std_normal_pdf(uq) / std_normal_cdf(uq);
        Ok(Self {
            dist,
            law,
            theta_hat: theta_hat.clone(),
            correction,
            clamped_ratio,
        })
    }

    pub fn projection_law(&self) -> ProjectionLaw {
        self.law
    }

    /// Standardized `p0/F0` at projection `z`, clamped on cdf underflow.
    pub fn hazard(&self, z: f64) -> f64 {
        let u = self.law.standardize(z);
        let cdf = std_normal_cdf(u);
        if cdf < CDF_FLOOR {
            self.clamped_ratio
        } else {
            std_normal_pdf(u) / cdf
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut s = self.dist.score(x)?;
        let ratio = self.hazard(x.dot(&self.theta_hat));
        s.axpy(-ratio, &self.correction, 1.0);
        Ok(s)
    }
}

/// One-shot [`EpochScore`] evaluation.
pub fn epoch_score(
    dist: &dyn ContextDistribution,
    theta_hat: &DVector<f64>,
    arms: usize,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    EpochScore::new(dist, theta_hat, arms)?.eval(x)
}
