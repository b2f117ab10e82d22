//! Ridge-regularized quasi-maximum-likelihood for GLM baselines.
//!
//! Solves the estimating equation
//!
//! ```text
//! g(θ) = Σ_i (y_i - f(x_i'θ)) x_i - λ θ = 0
//! ```
//!
//! by damped Newton steps `θ += s (Σ f'(x_i'θ) x_i x_i' + λI)^{-1} g(θ)`,
//! halving `s` until `||g||` decreases.

use nalgebra::{DMatrix, DMatrixView, DVector, RowDVector};

use crate::environment::LinkFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveFailure {
    /// Iteration budget exhausted; carries the last gradient norm.
    NotConverged(f64),
    /// No step size reduced the gradient norm.
    Stalled(f64),
    SingularJacobian,
}

/// Accumulated design and responses.
#[derive(Debug, Clone)]
pub struct QuasiMle {
    d: usize,
    ridge: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    options: NewtonOptions,
}

impl QuasiMle {
    pub fn new(d: usize, ridge: f64) -> Self {
        Self {
            d,
            ridge,
            xs: Vec::new(),
            ys: Vec::new(),
            options: NewtonOptions::default(),
        }
    }

    pub fn with_options(mut self, options: NewtonOptions) -> Self {
        self.options = options;
        self
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn push(&mut self, x: &DVector<f64>, y: f64) {
        debug_assert_eq!(x.len(), self.d);
        self.xs.extend(x.iter().copied());
        self.ys.push(y);
    }

    /// Design as a column-major `d × n` matrix, one column per sample.
    fn design(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.xs, self.d, self.ys.len())
    }

    /// Projections `x_i'θ` as a row vector.
    fn projections(&self, theta: &DVector<f64>) -> RowDVector<f64> {
        let mut z = RowDVector::zeros(self.ys.len());
        z.gemm(1.0, &theta.transpose(), &self.design(), 0.0);
        z
    }

    fn gradient_at(&self, link: &LinkFunction, theta: &DVector<f64>, z: &RowDVector<f64>) -> DVector<f64> {
        let n = self.ys.len();
        let r: Vec<f64> = z.iter().zip(&self.ys).map(|(zi, y)| y - link.value(*zi)).collect();
        let r = DMatrixView::from_slice(&r, n, 1);
        let mut g = DMatrix::from_column_slice(self.d, 1, theta.as_slice()) * -self.ridge;
        g.gemm(1.0, &self.design(), &r, 1.0);
        DVector::from_column_slice(g.as_slice())
    }

    fn jacobian_at(&self, link: &LinkFunction, z: &RowDVector<f64>, scratch: &mut DMatrix<f64>) -> DMatrix<f64> {
        let xt = self.design();
        let cols = scratch.as_mut_slice().chunks_exact_mut(self.d);
        for ((out, x), zi) in cols.zip(self.xs.chunks_exact(self.d)).zip(z.iter()) {
            let w = link.derivative(*zi);
            for (o, xj) in out.iter_mut().zip(x) {
                *o = w * xj;
            }
        }
        let mut jac = DMatrix::identity(self.d, self.d) * self.ridge;
        jac.gemm(1.0, &*scratch, &xt.transpose(), 1.0);
        jac
    }

    pub fn gradient(&self, link: &LinkFunction, theta: &DVector<f64>) -> DVector<f64> {
        self.gradient_at(link, theta, &self.projections(theta))
    }

    /// `Σ f'(x_i'θ) x_i x_i' + λI`.
    pub fn jacobian(&self, link: &LinkFunction, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut scratch = DMatrix::zeros(self.d, self.ys.len());
        self.jacobian_at(link, &self.projections(theta), &mut scratch)
    }

    /// Newton solve from `start`; returns the root and the iterations used.
    pub fn solve(&self, link: &LinkFunction, start: &DVector<f64>) -> Result<(DVector<f64>, usize), SolveFailure> {
        let opts = self.options;
        let mut scratch = DMatrix::zeros(self.d, self.ys.len());
        let mut theta = start.clone();
        let mut z = self.projections(&theta);
        let mut g = self.gradient_at(link, &theta, &z);
        let mut gnorm = g.norm();
        for iter in 0..opts.max_iterations {
            if gnorm <= opts.tolerance {
                return Ok((theta, iter));
            }
            let jac = self.jacobian_at(link, &z, &mut scratch);
            let step = match jac.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => jac.lu().solve(&g).ok_or(SolveFailure::SingularJacobian)?,
            };
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let cand = &theta + &step * scale;
                let cz = self.projections(&cand);
                let cg = self.gradient_at(link, &cand, &cz);
                let cn = cg.norm();
                if cn.is_finite() && cn < gnorm {
                    theta = cand;
                    z = cz;
                    g = cg;
                    gnorm = cn;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(SolveFailure::Stalled(gnorm));
            }
        }
        if gnorm <= opts.tolerance {
            Ok((theta, opts.max_iterations))
        } else {
            Err(SolveFailure::NotConverged(gnorm))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn identity_link_is_ridge_regression() {
        let mut mle = QuasiMle::new(2, 1.0);
        let data = [
            (dvector![1.0, 0.0], 1.0),
            (dvector![0.0, 2.0], -1.0),
            (dvector![1.0, 1.0], 0.5),
        ];
        let mut a = DMatrix::identity(2, 2);
        let mut b = DVector::zeros(2);
        for (x, y) in &data {
            mle.push(x, *y);
            a += x * x.transpose();
            b += x * *y;
        }
        let (theta, _) = mle.solve(&LinkFunction::Linear, &DVector::zeros(2)).unwrap();
        let exact = a.cholesky().unwrap().solve(&b);
        assert!((theta - exact).amax() < 1e-10);
    }

    #[test]
    fn poisson_root_has_small_gradient() {
        let mut mle = QuasiMle::new(1, 1e-3);
        for (x, y) in [(1.0, 3.0), (0.5, 1.0), (-1.0, 0.0), (2.0, 8.0)] {
            mle.push(&dvector![x], y);
        }
        let (theta, iters) = mle.solve(&LinkFunction::PoissonExp, &dvector![0.0]).unwrap();
        assert!(mle.gradient(&LinkFunction::PoissonExp, &theta).norm() <= 1e-8);
        assert!(iters > 0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut mle = QuasiMle::new(2, 0.5);
        for (x, y) in [
            (dvector![0.3, -1.0], 0.2),
            (dvector![1.2, 0.4], 1.0),
            (dvector![-0.7, 0.9], -0.4),
        ] {
            mle.push(&x, y);
        }
        let link = LinkFunction::SquarePlus;
        let th = dvector![0.4, 0.1];
        let jac = mle.jacobian(&link, &th);
        let h = 1e-6;
        for j in 0..2 {
            let mut e = DVector::zeros(2);
            e[j] = h;
            let fd = (mle.gradient(&link, &(&th + &e)) - mle.gradient(&link, &(&th - &e))) / (2.0 * h);
            // g decreases along the Jacobian
            assert!((fd + jac.column(j)).amax() < 1e-6);
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut mle = QuasiMle::new(1, 1e-6).with_options(NewtonOptions {
            max_iterations: 1,
            ..NewtonOptions::default()
        });
        for (x, y) in [(1.0, 50.0), (2.0, 90.0)] {
            mle.push(&dvector![x], y);
        }
        assert!(mle.solve(&LinkFunction::PoissonExp, &dvector![0.0]).is_err());
    }
}
