//! DDPM-style sampling with copula scores on the Gaussian scale.

use super::{CdcModel, ClassProbs};
use crate::data::{CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::normal;
use crate::processes::CorrelationMatrix;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    /// Exploration noise after each update; off only in tests.
    pub noise: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { noise: true }
    }
}

/// Sample `n` rows by stepping from the last grid time down to the first.
///
/// At grid index `t` the step uses `α_t = e^{2(T_{t-1} - T_t)}` and
/// `z ← (α_t z + (1 - α_t) Σ g) / √α_t + √(1 - α_t) H ε`, where `g` is the
/// class-ratio gradient at `t` and `H` the Cholesky factor of `Σ`
/// (identity in the independent case).
pub fn sample_with(
    probs: &dyn ClassProbs,
    grid: &TimeGrid,
    sigma: Option<&CorrelationMatrix>,
    n: usize,
    rng: &mut RngStream,
    opts: SampleOptions,
) -> Result<CopulaMatrix> {
    let (d, k) = (probs.dim(), grid.k());
    if probs.n_classes() != k {
        return Err(Error::config("class count differs from grid size"));
    }
    if n == 0 {
        return Err(Error::config("sample size must be at least 1"));
    }
    let times = grid.times();
    let mut out = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut pre = vec![0.0; d];
    let mut e = vec![0.0; d];
    let colour = |xi: &[f64], out: &mut [f64]| match sigma {
        Some(s) => s.colour(xi, out),
        None => out.copy_from_slice(xi),
    };
    for _ in 0..n {
        rng.fill_normal(&mut xi);
        colour(&xi, &mut z);
        for t in (1..k).rev() {
            let alpha = (2.0 * (times[t - 1] - times[t])).exp();
            let g = probs.grad_log_ratio(&z, t, k - 1)?;
            let g = match sigma {
                Some(s) => {
                    s.mul_sigma(&g, &mut pre);
                    &pre
                }
                None => &g,
            };
            let inv_sqrt = 1.0 / alpha.sqrt();
            for j in 0..d {
                z[j] = inv_sqrt * (alpha * z[j] + (1.0 - alpha) * g[j]);
            }
            if opts.noise {
                rng.fill_normal(&mut xi);
                let b = (1.0 - alpha).sqrt();
                colour(&xi, &mut e);
                for j in 0..d {
                    z[j] += b * e[j];
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Sampling {
                    step: t,
                    msg: format!("non-finite state {z:?}"),
                });
            }
        }
        out.extend(z.iter().map(|&v| normal::cdf(v)));
    }
    CopulaMatrix::new(out, n, d, Scale::Copula)
}

pub fn cdc_sample(model: &CdcModel, n: usize, rng: &mut RngStream) -> Result<CopulaMatrix> {
    sample_with(
        &model.net,
        &model.grid,
        model.sigma.as_ref(),
        n,
        rng,
        SampleOptions::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdc::AnalyticGaussianProbs;
    use crate::grid::GridScheme;
    use crate::metrics::{kendall_tau, ks_critical, ks_uniform};

    struct Zero(usize, usize);

    impl ClassProbs for Zero {
        fn n_classes(&self) -> usize {
            self.1
        }
        fn dim(&self) -> usize {
            self.0
        }
        fn log_probs(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![-(self.1 as f64).ln(); self.1])
        }
        fn grad_log_ratio(&self, z: &[f64], _: usize, _: usize) -> Result<Vec<f64>> {
            Ok(vec![0.0; z.len()])
        }
    }

    struct Exploding;

    impl ClassProbs for Exploding {
        fn n_classes(&self) -> usize {
            3
        }
        fn dim(&self) -> usize {
            1
        }
        fn log_probs(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0; 3])
        }
        fn grad_log_ratio(&self, _: &[f64], _: usize, _: usize) -> Result<Vec<f64>> {
            Ok(vec![f64::INFINITY])
        }
    }

    #[test]
    fn zero_score_without_noise_telescopes() {
        let grid = TimeGrid::new(GridScheme::Kl, 8, 3.0).unwrap();
        let opts = SampleOptions { noise: false };
        let out = sample_with(&Zero(2, 8), &grid, None, 5, &mut RngStream::new(1, 0), opts).unwrap();
        let mut init = RngStream::new(1, 0);
        for row in out.rows() {
            let z0 = init.normals(2);
            for j in 0..2 {
                let want = normal::cdf(z0[j] * (-3.0f64).exp());
                assert!((row[j] - want).abs() < 1e-12);
            }
        }
        assert!(((-3.0f64).exp() - 0.049787).abs() < 1e-6);
    }

    #[test]
    fn zero_score_with_noise_keeps_uniform_marginals() {
        let grid = TimeGrid::new(GridScheme::Kl, 10, 3.0).unwrap();
        let n = 10_000;
        let out = sample_with(
            &Zero(2, 10),
            &grid,
            None,
            n,
            &mut RngStream::new(2, 0),
            SampleOptions::default(),
        )
        .unwrap();
        for j in 0..2 {
            assert!(ks_uniform(&out.column(j)) < ks_critical(n, 1e-3));
        }
    }

    #[test]
    fn oracle_scores_recover_dependence() {
        let rho = 0.8;
        let grid = TimeGrid::new(GridScheme::Kl, 100, 3.0).unwrap();
        let o = AnalyticGaussianProbs::new(&CorrelationMatrix::bivariate(rho).unwrap(), &grid, None).unwrap();
        let out = sample_with(
            &o,
            &grid,
            None,
            3000,
            &mut RngStream::new(3, 0),
            SampleOptions::default(),
        )
        .unwrap();
        let tau = kendall_tau(&out.column(0), &out.column(1));
        let target = 2.0 / std::f64::consts::PI * rho.asin();
        assert!((tau - target).abs() < 0.05, "{tau}");
    }

    #[test]
    fn deterministic_and_reports_blow_up() {
        let grid = TimeGrid::new(GridScheme::Kl, 3, 3.0).unwrap();
        let a = sample_with(
            &Zero(2, 3),
            &grid,
            None,
            4,
            &mut RngStream::new(5, 1),
            SampleOptions::default(),
        )
        .unwrap();
        let b = sample_with(
            &Zero(2, 3),
            &grid,
            None,
            4,
            &mut RngStream::new(5, 1),
            SampleOptions::default(),
        )
        .unwrap();
        assert_eq!(a, b);
        let err = sample_with(
            &Exploding,
            &grid,
            None,
            1,
            &mut RngStream::new(5, 1),
            SampleOptions::default(),
        );
        assert!(matches!(err, Err(Error::Sampling { step: 2, .. })));
    }
}
