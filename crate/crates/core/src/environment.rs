//! Ground-truth single index bandit simulator.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::distribution::ContextDistribution;
use crate::error::{check_dim, Error, Result};
use crate::rng::SimRng;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied link with its derivative.
#[derive(Clone)]
pub struct CustomLink {
    name: String,
    f: ScalarFn,
    df: ScalarFn,
    value_bound: f64,
    slope_bound: f64,
    increasing: bool,
}

impl CustomLink {
    /// Links declared increasing are spot-checked on a grid over `[-5, 5]`.
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        value_bound: f64,
        slope_bound: f64,
        increasing: bool,
    ) -> Result<Self> {
        if increasing {
            let mut prev = f(-5.0);
            for k in 1..=1000 {
                let cur = f(-5.0 + 0.01 * k as f64);
                if cur < prev {
                    return Err(Error::invalid(
                        "link",
                        format!("declared increasing but decreases near {:.2}", -5.0 + 0.01 * k as f64),
                    ));
                }
                prev = cur;
            }
        }
        Ok(Self {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            value_bound,
            slope_bound,
            increasing,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Declared bounds `(L_f, L_f')`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.value_bound, self.slope_bound)
    }
}

impl fmt::Debug for CustomLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLink")
            .field("name", &self.name)
            .field("increasing", &self.increasing)
            .finish_non_exhaustive()
    }
}

/// Expected reward as a function of the index `x'θ*`.
#[derive(Debug, Clone)]
pub enum LinkFunction {
    /// `f(z) = z`
    Linear,
    /// `f(z) = exp(z)`, rewards drawn from a Poisson law.
    PoissonExp,
    /// `f(z) = sign(z) z² + 2z`
    SquarePlus,
    /// `f(z) = z⁵`
    Fifth,
    Custom(CustomLink),
}

impl LinkFunction {
    /// The non-monotone link `z² + z`.
    pub fn quadratic() -> Self {
        let link = CustomLink::new(
            "quadratic",
            |z| z * z + z,
            |z| 2.0 * z + 1.0,
            f64::INFINITY,
            f64::INFINITY,
            false,
        )
        .expect("non-monotone links skip the grid check");
        LinkFunction::Custom(link)
    }

    pub fn value(&self, z: f64) -> f64 {
        match self {
            LinkFunction::Linear => z,
            LinkFunction::PoissonExp => z.exp(),
            LinkFunction::SquarePlus => z.signum() * z * z + 2.0 * z,
            LinkFunction::Fifth => z.powi(5),
            LinkFunction::Custom(c) => (c.f)(z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            LinkFunction::Linear => 1.0,
            LinkFunction::PoissonExp => z.exp(),
            LinkFunction::SquarePlus => 2.0 * z.abs() + 2.0,
            LinkFunction::Fifth => 5.0 * z.powi(4),
            LinkFunction::Custom(c) => (c.df)(z),
        }
    }

    pub fn is_increasing(&self) -> bool {
        match self {
            LinkFunction::Custom(c) => c.increasing,
            _ => true,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            LinkFunction::Linear => "linear",
            LinkFunction::PoissonExp => "poisson",
            LinkFunction::SquarePlus => "square",
            LinkFunction::Fifth => "fifth",
            LinkFunction::Custom(c) => c.name(),
        }
    }
}

/// Default bound on the exponent of the Poisson mean.
pub const DEFAULT_POISSON_CLAMP: f64 = 10.0;

/// One simulated problem instance: context law, direction, link and noise.
#[derive(Debug, Clone)]
pub struct SibEnvironment {
    dist: Arc<dyn ContextDistribution>,
    theta_star: DVector<f64>,
    link: LinkFunction,
    noise_sigma: f64,
    arms: usize,
    sparsity: Option<usize>,
    clamp: f64,
}

/// Everything about one played round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub arm_set: Vec<DVector<f64>>,
    pub chosen_index: usize,
    pub reward: f64,
    pub instant_regret: f64,
}

impl SibEnvironment {
    /// Draws `θ*` with i.i.d. standard normal entries (on a uniformly chosen
    /// support of size `sparsity` when given) and normalizes it to unit ℓ1
    /// norm.
    pub fn generate(
        dist: Arc<dyn ContextDistribution>,
        arms: usize,
        link: LinkFunction,
        noise_sigma: f64,
        sparsity: Option<usize>,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let d = dist.dim();
        if let Some(s) = sparsity {
            if s == 0 || s > d {
                return Err(Error::invalid("sparsity", format!("must lie in 1..={d}, got {s}")));
            }
        }
        let theta = loop {
            let mut theta = DVector::zeros(d);
            match sparsity {
                Some(s) => {
                    let mut support: Vec<usize> = index::sample(rng, d, s).into_vec();
                    support.sort_unstable();
                    for j in support {
                        theta[j] = rng.sample::<f64, _>(StandardNormal);
                    }
                }
                None => theta.iter_mut().for_each(|v| *v = rng.sample::<f64, _>(StandardNormal)),
            }
            if theta.lp_norm(1) > 0.0 {
                break theta;
            }
        };
        let mut env = Self::with_theta(dist, theta, arms, link, noise_sigma)?;
        env.sparsity = sparsity;
        Ok(env)
    }

    /// Uses a caller-supplied direction, rescaled to unit ℓ1 norm.
    pub fn with_theta(
        dist: Arc<dyn ContextDistribution>,
        theta: DVector<f64>,
        arms: usize,
        link: LinkFunction,
        noise_sigma: f64,
    ) -> Result<Self> {
        check_dim(dist.dim(), theta.len())?;
        if arms < 3 {
            return Err(Error::invalid(
                "arms",
                format!("at least 3 arms per round are required, got {arms}"),
            ));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::invalid(
                "noise_sigma",
                format!("must be non-negative, got {noise_sigma}"),
            ));
        }
        let norm = theta.lp_norm(1);
        if !(norm > 0.0) {
            return Err(Error::ZeroDirection);
        }
        let theta_star = theta / norm;
        Ok(Self {
            dist,
            theta_star,
            link,
            noise_sigma,
            arms,
            sparsity: None,
            clamp: DEFAULT_POISSON_CLAMP,
        })
    }

    pub fn with_clamp(mut self, clamp: f64) -> Result<Self> {
        if !(clamp > 0.0) {
            return Err(Error::invalid("clamp", format!("must be positive, got {clamp}")));
        }
        self.clamp = clamp;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn sparsity(&self) -> Option<usize> {
        self.sparsity
    }

    pub fn distribution(&self) -> &Arc<dyn ContextDistribution> {
        &self.dist
    }

    /// `K` independent contexts.
    pub fn draw_round(&self, rng: &mut SimRng) -> Vec<DVector<f64>> {
        (0..self.arms).map(|_| self.dist.sample(rng)).collect()
    }

    /// Noiseless expected reward `f(x'θ*)`.
    pub fn mean_reward(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let z = x.dot(&self.theta_star);
        Ok(match self.link {
            LinkFunction::PoissonExp => z.min(self.clamp).exp(),
            _ => self.link.value(z),
        })
    }

    /// Stochastic reward for pulling `x`.
    pub fn pull(&self, x: &DVector<f64>, rng: &mut SimRng) -> Result<f64> {
        let mean = self.mean_reward(x)?;
        match self.link {
            LinkFunction::PoissonExp => {
                let law = Poisson::new(mean).map_err(|e| Error::invalid("poisson_mean", e.to_string()))?;
                Ok(law.sample(rng))
            }
            _ => {
                let eta: f64 = rng.sample(StandardNormal);
                Ok(mean + self.noise_sigma * eta)
            }
        }
    }

    /// Index of the best arm under the noiseless link; lowest index on ties.
    pub fn oracle_index(&self, arm_set: &[DVector<f64>]) -> Result<usize> {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (j, x) in arm_set.iter().enumerate() {
            check_dim(self.dim(), x.len())?;
            let z = x.dot(&self.theta_star);
            let key = if self.link.is_increasing() {
                z
            } else {
                self.link.value(z)
            };
            if key > best.1 {
                best = (j, key);
            }
        }
        if arm_set.is_empty() {
            return Err(Error::IndexOutOfRange { index: 0, arms: 0 });
        }
        Ok(best.0)
    }

    /// `f(x_*'θ*) - f(x_chosen'θ*)`.
    pub fn instant_regret(&self, arm_set: &[DVector<f64>], chosen: usize) -> Result<f64> {
        if chosen >= arm_set.len() {
            return Err(Error::IndexOutOfRange {
                index: chosen,
                arms: arm_set.len(),
            });
        }
        let best = self.oracle_index(arm_set)?;
        let f = |x: &DVector<f64>| self.link.value(x.dot(&self.theta_star));
        Ok((f(&arm_set[best]) - f(&arm_set[chosen])).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::GaussianContext;
    use crate::rng::stream;
    use nalgebra::dvector;

    fn std_env(d: usize, k: usize, link: LinkFunction, seed: u64) -> SibEnvironment {
        let dist = Arc::new(GaussianContext::standard(d).unwrap());
        SibEnvironment::generate(dist, k, link, 0.5, None, &mut stream(seed, 0)).unwrap()
    }

    #[test]
    fn theta_is_l1_normalized() {
        for seed in 0..20 {
            let env = std_env(15, 20, LinkFunction::Linear, seed);
            assert!((env.theta_star().lp_norm(1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_support_size() {
        let dist = Arc::new(GaussianContext::standard(60).unwrap());
        let env =
            SibEnvironment::generate(dist.clone(), 30, LinkFunction::Linear, 0.5, Some(10), &mut stream(1, 0)).unwrap();
        assert_eq!(env.theta_star().iter().filter(|v| **v != 0.0).count(), 10);
        assert_eq!(env.sparsity(), Some(10));
        assert!((env.theta_star().lp_norm(1) - 1.0).abs() < 1e-12);
        assert!(SibEnvironment::generate(dist, 30, LinkFunction::Linear, 0.5, Some(61), &mut stream(1, 0)).is_err());
    }

    #[test]
    fn too_few_arms_rejected() {
        let dist = Arc::new(GaussianContext::standard(3).unwrap());
        assert!(SibEnvironment::generate(dist, 2, LinkFunction::Linear, 0.5, None, &mut stream(1, 0)).is_err());
    }

    #[test]
    fn draw_round_cardinality_and_determinism() {
        let env = std_env(4, 3, LinkFunction::Linear, 2);
        let a = env.draw_round(&mut stream(9, 1));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|x| x.len() == 4));
        assert_eq!(a, env.draw_round(&mut stream(9, 1)));
    }

    #[test]
    fn link_values() {
        assert_eq!(LinkFunction::SquarePlus.value(1.0), 3.0);
        assert_eq!(LinkFunction::SquarePlus.value(-1.0), -3.0);
        assert_eq!(LinkFunction::Fifth.value(2.0), 32.0);
        assert_eq!(LinkFunction::Linear.value(-0.3), -0.3);
        assert_eq!(LinkFunction::PoissonExp.value(0.0), 1.0);
        assert!(!LinkFunction::quadratic().is_increasing());
    }

    #[test]
    fn custom_increasing_link_is_spot_checked() {
        assert!(CustomLink::new("cube", |z| z * z * z, |z| 3.0 * z * z, 1.0, 1.0, true).is_ok());
        assert!(CustomLink::new("bad", |z| z * z, |z| 2.0 * z, 1.0, 1.0, true).is_err());
        assert!(CustomLink::new("ok", |z| z * z, |z| 2.0 * z, 1.0, 1.0, false).is_ok());
    }

    #[test]
    fn two_arm_regret_example() {
        let dist = Arc::new(GaussianContext::standard(2).unwrap());
        let env = SibEnvironment::with_theta(dist, dvector![1.0, 0.0], 3, LinkFunction::Linear, 0.0).unwrap();
        let arms = vec![dvector![0.0, 5.0], dvector![1.0, -3.0]];
        assert_eq!(env.instant_regret(&arms, 0).unwrap(), 1.0);
        assert_eq!(env.instant_regret(&arms, 1).unwrap(), 0.0);
        assert!(matches!(
            env.instant_regret(&arms, 2),
            Err(Error::IndexOutOfRange { index: 2, arms: 2 })
        ));
    }

    #[test]
    fn non_monotone_oracle_uses_link_values() {
        let dist = Arc::new(GaussianContext::standard(1).unwrap());
        let env = SibEnvironment::with_theta(dist, dvector![1.0], 3, LinkFunction::quadratic(), 0.0).unwrap();
        // f(-3) = 6 beats f(1) = 2
        let arms = vec![dvector![1.0], dvector![-3.0], dvector![0.0]];
        assert_eq!(env.oracle_index(&arms).unwrap(), 1);
        assert_eq!(env.instant_regret(&arms, 0).unwrap(), 4.0);
    }

    #[test]
    fn poisson_mean_at_zero_index() {
        let dist = Arc::new(GaussianContext::standard(2).unwrap());
        let env = SibEnvironment::with_theta(dist, dvector![0.5, 0.5], 3, LinkFunction::PoissonExp, 0.0).unwrap();
        let x = dvector![1.0, -1.0];
        let mut rng = stream(4, 2);
        let n = 100_000;
        let mean = (0..n).map(|_| env.pull(&x, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // Poisson(1): sd of the mean is 1/sqrt(n)
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn poisson_exponent_is_clamped() {
        let dist = Arc::new(GaussianContext::standard(1).unwrap());
        let env = SibEnvironment::with_theta(dist, dvector![1.0], 3, LinkFunction::PoissonExp, 0.0)
            .unwrap()
            .with_clamp(2.0)
            .unwrap();
        assert_eq!(env.mean_reward(&dvector![50.0]).unwrap(), 2.0_f64.exp());
    }

    #[test]
    fn pull_checks_dimension() {
        let env = std_env(3, 3, LinkFunction::Linear, 0);
        assert!(env.pull(&dvector![1.0], &mut stream(0, 2)).is_err());
    }
}
