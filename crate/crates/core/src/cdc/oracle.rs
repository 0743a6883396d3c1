//! Bayes-optimal class probabilities for Gaussian-copula data.
//!
//! With data `z_0 ~ N(0, Σ₀)` the diffused point at time `t` is
//! `N(0, e^{-2t} Σ₀ + (1 - e^{-2t}) Σ)`, and the last class is `N(0, Σ)`.
//! Every class covariance has a unit diagonal, so each is itself a
//! correlation matrix.

use nalgebra::DMatrix;

use super::ClassProbs;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::neural::log_softmax;
use crate::processes::CorrelationMatrix;

#[derive(Debug, Clone)]
pub struct AnalyticGaussianProbs {
    classes: Vec<CorrelationMatrix>,
}

impl AnalyticGaussianProbs {
    /// `sigma` is the forward-process noise correlation, identity when absent.
    pub fn new(sigma0: &CorrelationMatrix, grid: &TimeGrid, sigma: Option<&CorrelationMatrix>) -> Result<Self> {
        let d = sigma0.d();
        let noise = match sigma {
            Some(s) if s.d() != d => return Err(Error::size("noise correlation has the wrong dimension")),
            Some(s) => s.sigma().clone(),
            None => DMatrix::identity(d, d),
        };
        let k = grid.k();
        let classes = grid
            .times()
            .iter()
            .enumerate()
            .map(|(s, &t)| {
                let c = if s + 1 == k {
                    noise.clone()
                } else {
                    let a = (-2.0 * t).exp();
                    sigma0.sigma() * a + &noise * (1.0 - a)
                };
                CorrelationMatrix::new(c).map_err(|e| Error::numeric(format!("class {s} covariance: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { classes })
    }

    fn log_densities(&self, z: &[f64]) -> Vec<f64> {
        // the shared (2π)^{-d/2} factor cancels after normalisation
        self.classes
            .iter()
            .map(|c| -0.5 * c.log_det() - 0.5 * c.quad_inverse(z))
            .collect()
    }
}

impl ClassProbs for AnalyticGaussianProbs {
    fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn dim(&self) -> usize {
        self.classes[0].d()
    }

    fn log_probs(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::size("point has the wrong dimension"));
        }
        Ok(log_softmax(&self.log_densities(z)))
    }

    fn grad_log_ratio(&self, z: &[f64], a: usize, b: usize) -> Result<Vec<f64>> {
        let k = self.n_classes();
        if a >= k || b >= k {
            return Err(Error::Index(format!("classes {a}, {b} of {k}")));
        }
        if z.len() != self.dim() {
            return Err(Error::size("point has the wrong dimension"));
        }
        let d = z.len();
        let mut ga = vec![0.0; d];
        let mut gb = vec![0.0; d];
        self.classes[a].mul_inverse(z, &mut ga);
        self.classes[b].mul_inverse(z, &mut gb);
        // ∇ log N(z; C) = -C⁻¹ z
        Ok(gb.iter().zip(&ga).map(|(y, x)| y - x).collect())
    }
}

/// Class probabilities of the Gaussian-copula oracle at one point.
pub fn analytic_class_probs(sigma0: &CorrelationMatrix, grid: &TimeGrid, z: &[f64]) -> Result<Vec<f64>> {
    let oracle = AnalyticGaussianProbs::new(sigma0, grid, None)?;
    Ok(oracle.log_probs(z)?.into_iter().map(f64::exp).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridScheme;

    fn mvn_pdf(z: &[f64], c: [[f64; 2]; 2]) -> f64 {
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let q = (c[1][1] * z[0] * z[0] - 2.0 * c[0][1] * z[0] * z[1] + c[0][0] * z[1] * z[1]) / det;
        (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }

    #[test]
    fn identity_gives_uniform_classes() {
        let grid = TimeGrid::new(GridScheme::Kl, 6, 3.0).unwrap();
        let p = analytic_class_probs(&CorrelationMatrix::identity(3).unwrap(), &grid, &[0.4, -1.0, 2.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        let p = analytic_class_probs(&CorrelationMatrix::identity(1).unwrap(), &grid, &[1.7]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn three_class_example_by_direct_evaluation() {
        let rho = 0.8;
        let grid = TimeGrid::from_times(vec![0.0, 0.3453, 3.0], GridScheme::Kl).unwrap();
        let z = [1.0, 1.0];
        let p = analytic_class_probs(&CorrelationMatrix::bivariate(rho).unwrap(), &grid, &z).unwrap();
        let a = (-2.0f64 * 0.3453).exp();
        let dens = [
            mvn_pdf(&z, [[1.0, rho], [rho, 1.0]]),
            mvn_pdf(&z, [[1.0, a * rho], [a * rho, 1.0]]),
            mvn_pdf(&z, [[1.0, 0.0], [0.0, 1.0]]),
        ];
        let total: f64 = dens.iter().sum();
        for s in 0..3 {
            assert!((p[s] - dens[s] / total).abs() < 1e-14);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = TimeGrid::new(GridScheme::Kl, 4, 3.0).unwrap();
        let sig = CorrelationMatrix::bivariate(-0.3).unwrap();
        let o = AnalyticGaussianProbs::new(&CorrelationMatrix::bivariate(0.7).unwrap(), &grid, Some(&sig)).unwrap();
        let z = [0.4, 1.1];
        let g = o.grad_log_ratio(&z, 1, 3).unwrap();
        for i in 0..2 {
            let h = 1e-6;
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let f = |z: &[f64]| {
                let lp = o.log_probs(z).unwrap();
                lp[1] - lp[3]
            };
            assert!((g[i] - (f(&zp) - f(&zm)) / (2.0 * h)).abs() < 1e-7);
        }
    }
}
