//! Windowed Nadaraya-Watson regression with the uniform kernel.
//!
//! ```text
//! f̂(z) = Σ y_i 1{|z - z_i| <= h} / Σ 1{|z - z_i| <= h}   if |z - c| <= W
//!        0                                              otherwise
//! ```
//!
//! with `0/0 = 0`. The `1/h` factor of the kernel cancels in the ratio and is
//! not stored. Projections are kept sorted with compensated prefix sums of
//! the rewards, so a query costs two binary searches.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::estimator::SampleBatch;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelFit {
    projections: Vec<f64>,
    rewards: Vec<f64>,
    // prefix[i] = Σ_{k<i} rewards[k] as an unevaluated sum hi + lo
    prefix_hi: Vec<f64>,
    prefix_lo: Vec<f64>,
    bandwidth: f64,
    window: f64,
    center: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl KernelFit {
    pub fn fit(samples: &SampleBatch, theta0: &DVector<f64>, bandwidth: f64, window: f64, center: f64) -> Result<Self> {
        let d = samples.dim().ok_or(Error::EmptyBatch)?;
        check_dim(d, theta0.len())?;
        let pairs = samples.iter().map(|(x, y)| (x.dot(theta0), y)).collect();
        Self::from_projections(pairs, bandwidth, window, center)
    }

    /// Fits directly on `(z_i, y_i)` pairs.
    pub fn from_projections(mut pairs: Vec<(f64, f64)>, bandwidth: f64, window: f64, center: f64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if !(bandwidth > 0.0) {
            return Err(Error::invalid(
                "bandwidth",
                format!("must be positive, got {bandwidth}"),
            ));
        }
        if !(window > 0.0) {
            return Err(Error::invalid("window", format!("must be positive, got {window}")));
        }
        if pairs.iter().any(|(z, _)| z.is_nan()) {
            return Err(Error::invalid("projections", "NaN projection"));
        }
        // stable, so equal projections keep their input order
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (projections, rewards): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut prefix_hi = Vec::with_capacity(rewards.len() + 1);
        let mut prefix_lo = Vec::with_capacity(rewards.len() + 1);
        let (mut hi, mut lo) = (0.0, 0.0);
        prefix_hi.push(hi);
        prefix_lo.push(lo);
        for &y in &rewards {
            let (s, e) = two_sum(hi, y);
            hi = s;
            lo += e;
            prefix_hi.push(hi);
            prefix_lo.push(lo);
        }
        Ok(Self {
            projections,
            rewards,
            prefix_hi,
            prefix_lo,
            bandwidth,
            window,
            center,
        })
    }

    pub fn projections(&self) -> &[f64] {
        &self.projections
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    /// Number of stored projections within `h` of `z`.
    pub fn neighbours(&self, z: f64) -> usize {
        let (lo, hi) = self.range(z);
        hi - lo
    }

    fn range(&self, z: f64) -> (usize, usize) {
        let lo = self.projections.partition_point(|&p| p < z - self.bandwidth);
        let hi = self.projections.partition_point(|&p| p <= z + self.bandwidth);
        (lo, hi.max(lo))
    }

    pub fn predict(&self, z: f64) -> f64 {
        if !((z - self.center).abs() <= self.window) {
            return 0.0;
        }
        let (lo, hi) = self.range(z);
        if hi == lo {
            return 0.0;
        }
        let sum = (self.prefix_hi[hi] - self.prefix_hi[lo]) + (self.prefix_lo[hi] - self.prefix_lo[lo]);
        sum / (hi - lo) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn fit(pairs: &[(f64, f64)], h: f64, w: f64, c: f64) -> KernelFit {
        KernelFit::from_projections(pairs.to_vec(), h, w, c).unwrap()
    }

    #[test]
    fn one_sample() {
        let b = SampleBatch::new(vec![dvector![1.0, 1.0]], vec![4.0]).unwrap();
        let f = KernelFit::fit(&b, &dvector![0.5, 0.5], 0.1, 5.0, 0.0).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.predict(1.0), 4.0);
    }

    #[test]
    fn empty_and_bad_parameters() {
        let e = SampleBatch::default();
        assert_eq!(
            KernelFit::fit(&e, &dvector![1.0], 0.1, 1.0, 0.0).unwrap_err(),
            Error::EmptyBatch
        );
        assert!(KernelFit::from_projections(vec![(0.0, 1.0)], 0.0, 1.0, 0.0).is_err());
        assert!(KernelFit::from_projections(vec![(0.0, 1.0)], 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn average_in_bandwidth() {
        let f = fit(&[(0.5, 1.0), (0.5, 3.0)], 0.1, 2.0, 0.0);
        assert_eq!(f.predict(0.5), 2.0);
    }

    #[test]
    fn outside_window_is_zero() {
        let f = fit(&[(3.0, 7.0), (3.05, 9.0)], 0.1, 1.0, 0.0);
        assert_eq!(f.predict(3.0), 0.0);
    }

    #[test]
    fn zero_over_zero_is_zero() {
        let f = fit(&[(0.0, 7.0)], 0.1, 5.0, 0.0);
        assert_eq!(f.predict(1.0), 0.0);
    }

    #[test]
    fn bandwidth_boundary_is_closed() {
        let f = fit(&[(0.0, 2.0), (0.5, 4.0)], 0.5, 5.0, 0.0);
        assert_eq!(f.predict(0.0), 3.0);
        assert_eq!(f.neighbours(0.25), 2);
    }

    #[test]
    fn sorted_input_keeps_order() {
        let pairs = [(-1.0, 1.0), (0.0, 2.0), (0.0, 5.0), (2.0, 3.0)];
        let f = fit(&pairs, 0.1, 5.0, 0.0);
        assert_eq!(f.projections(), &[-1.0, 0.0, 0.0, 2.0]);
        assert_eq!(f.rewards(), &[1.0, 2.0, 5.0, 3.0]);
        let shuffled = [(2.0, 3.0), (0.0, 2.0), (-1.0, 1.0), (0.0, 5.0)];
        assert_eq!(fit(&shuffled, 0.1, 5.0, 0.0).rewards(), &[1.0, 2.0, 5.0, 3.0]);
    }
}
