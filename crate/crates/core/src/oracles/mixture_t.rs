//! Copula of a mixture of multivariate Student-t distributions.
//!
//! Each component is a correlation-parameterised multivariate t with unit
//! marginal scales, so every marginal is a mixture of shifted univariate
//! t distributions. Marginal CDFs are exact; their inverses start from a
//! monotone table and are polished by safeguarded Newton steps.

use nalgebra::DMatrix;
use rand_distr::{ChiSquared, Distribution};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::data::{CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::neural::{ArtifactKind, Checkpoint, TimeEmbedding};
use crate::processes::{build_correlation, CorrelationMatrix, CorrelationSource};
use crate::rng::RngStream;

pub const DEFAULT_WEIGHTS: [f64; 4] = [0.3, 0.3, 0.2, 0.2];
pub const DEFAULT_DF: f64 = 10.0;
const MEAN_SCALE: f64 = 4.0;
const TABLE_HALF_WIDTH: f64 = 60.0;
const TABLE_POINTS: usize = 6001;

/// Per-dimension marginal of the mixture.
#[derive(Debug, Clone)]
pub struct MarginalTable {
    locations: Vec<f64>,
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MixtureTCopula {
    pub weights: Vec<f64>,
    pub df: f64,
    pub means: Vec<Vec<f64>>,
    pub sigmas: Vec<CorrelationMatrix>,
    marginals: Vec<MarginalTable>,
    t1: StudentsT,
    log_norm_1: f64,
    log_norm_d: Vec<f64>,
    log_weights: Vec<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `ln Γ((ν+d)/2) - ln Γ(ν/2) - d/2 ln(νπ)`.
fn t_log_norm(df: f64, d: usize) -> f64 {
    ln_gamma((df + d as f64) / 2.0) - ln_gamma(df / 2.0) - 0.5 * d as f64 * (df * std::f64::consts::PI).ln()
}

impl MixtureTCopula {
    pub fn new(weights: Vec<f64>, df: f64, means: Vec<Vec<f64>>, sigmas: Vec<CorrelationMatrix>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || sigmas.len() != k {
            return Err(Error::size("mixture needs matching weights, means and correlations"));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) || sigmas.iter().any(|s| s.d() != d) {
            return Err(Error::size("mixture components disagree on dimension"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || ((weights.iter().sum::<f64>()) - 1.0).abs() > 1e-12 {
            return Err(Error::domain("mixture weights must be positive and sum to one"));
        }
        if !(df > 2.0) || !df.is_finite() {
            return Err(Error::domain(format!("degrees of freedom must exceed 2, got {df}")));
        }
        let t1 = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::numeric(e.to_string()))?;
        let log_norm_1 = t_log_norm(df, 1);
        let log_norm_d = sigmas.iter().map(|s| t_log_norm(df, d) - 0.5 * s.log_det()).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let mut m = Self {
            weights,
            df,
            means,
            sigmas,
            marginals: Vec::new(),
            t1,
            log_norm_1,
            log_norm_d,
            log_weights,
        };
        m.marginals = (0..d).map(|i| m.build_table(i)).collect();
        Ok(m)
    }

    pub fn d(&self) -> usize {
        self.means[0].len()
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    fn build_table(&self, i: usize) -> MarginalTable {
        let locations: Vec<f64> = self.means.iter().map(|m| m[i]).collect();
        let lo = locations.iter().copied().fold(f64::INFINITY, f64::min) - TABLE_HALF_WIDTH;
        let hi = locations.iter().copied().fold(f64::NEG_INFINITY, f64::max) + TABLE_HALF_WIDTH;
        let mut xs = Vec::with_capacity(TABLE_POINTS);
        let mut cdf = Vec::with_capacity(TABLE_POINTS);
        for j in 0..TABLE_POINTS {
            let x = lo + (hi - lo) * j as f64 / (TABLE_POINTS - 1) as f64;
            let f = self.marginal_cdf_at(&locations, x);
            if cdf.last().is_none_or(|&prev| f > prev) {
                xs.push(x);
                cdf.push(f);
            }
        }
        MarginalTable { locations, xs, cdf }
    }

    fn marginal_cdf_at(&self, locations: &[f64], x: f64) -> f64 {
        locations
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| w * self.t1.cdf(x - m))
            .sum()
    }

    fn t1_log_pdf(&self, r: f64) -> f64 {
        self.log_norm_1 - 0.5 * (self.df + 1.0) * (r * r / self.df).ln_1p()
    }

    /// Marginal CDF `F^i(x)`.
    pub fn marginal_cdf(&self, i: usize, x: f64) -> f64 {
        self.marginal_cdf_at(&self.marginals[i].locations, x)
    }

    /// Marginal log density `log f^i(x)`.
    pub fn marginal_log_pdf(&self, i: usize, x: f64) -> f64 {
        let terms: Vec<f64> = self.marginals[i]
            .locations
            .iter()
            .zip(&self.log_weights)
            .map(|(m, lw)| lw + self.t1_log_pdf(x - m))
            .collect();
        log_sum_exp(&terms)
    }

    /// `(F^i)⁻¹(u)`, accurate to a few ulps of `x`.
    pub fn marginal_quantile(&self, i: usize, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("quantile level {u} outside (0,1)")));
        }
        let tab = &self.marginals[i];
        let n = tab.xs.len();
        let pos = tab.cdf.partition_point(|&f| f < u);
        let (mut lo, mut hi) = if pos == 0 {
            // below the table: widen geometrically
            let mut lo = tab.xs[0] - 1.0;
            let mut step = 2.0;
            while self.marginal_cdf(i, lo) >= u {
                lo -= step;
                step *= 2.0;
                if !lo.is_finite() {
                    return Err(Error::numeric(format!("no lower bracket for quantile {u}")));
                }
            }
            (lo, tab.xs[0])
        } else if pos == n {
            let mut hi = tab.xs[n - 1] + 1.0;
            let mut step = 2.0;
            while self.marginal_cdf(i, hi) < u {
                hi += step;
                step *= 2.0;
                if !hi.is_finite() || step > 1e300 {
                    return Err(Error::numeric(format!("no upper bracket for quantile {u}")));
                }
            }
            (tab.xs[n - 1], hi)
        } else {
            (tab.xs[pos - 1], tab.xs[pos])
        };
        // linear interpolation start inside the bracket
        let mut x = if pos > 0 && pos < n {
            let (f0, f1) = (tab.cdf[pos - 1], tab.cdf[pos]);
            lo + (hi - lo) * ((u - f0) / (f1 - f0)).clamp(0.0, 1.0)
        } else {
            0.5 * (lo + hi)
        };
        for _ in 0..200 {
            let f = self.marginal_cdf(i, x) - u;
            if f == 0.0 {
                return Ok(x);
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let dens = self.marginal_log_pdf(i, x).exp();
            let mut next = x - f / dens;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0)
                || hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0)
            {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    /// Joint mixture log density on the data scale.
    pub fn joint_log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.d();
        let mut diff = vec![0.0; d];
        let terms: Vec<f64> = (0..self.k())
            .map(|k| {
                for j in 0..d {
                    diff[j] = x[j] - self.means[k][j];
                }
                let delta = self.sigmas[k].quad_inverse(&diff);
                self.log_weights[k] + self.log_norm_d[k] - 0.5 * (self.df + d as f64) * (delta / self.df).ln_1p()
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// Copula log density at a data-scale point.
    pub fn logpdf_data_scale(&self, x: &[f64]) -> f64 {
        self.joint_log_pdf(x) - (0..self.d()).map(|i| self.marginal_log_pdf(i, x[i])).sum::<f64>()
    }

    pub fn logpdf(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.d() {
            return Err(Error::size(format!(
                "expected {} coordinates, got {}",
                self.d(),
                u.len()
            )));
        }
        let x = u
            .iter()
            .enumerate()
            .map(|(i, &v)| self.marginal_quantile(i, v))
            .collect::<Result<Vec<_>>>()?;
        let l = self.logpdf_data_scale(&x);
        if !l.is_finite() {
            return Err(Error::numeric(format!("non-finite mixture log density at {u:?}")));
        }
        Ok(l)
    }

    /// Draws on the copula scale together with their exact log densities
    /// and the component that produced each row.
    pub fn sample_with_components(
        &self,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<(CopulaMatrix, Vec<f64>, Vec<usize>)> {
        let d = self.d();
        let chi = ChiSquared::new(self.df).map_err(|e| Error::numeric(e.to_string()))?;
        let mut u = Vec::with_capacity(n * d);
        let mut logs = Vec::with_capacity(n);
        let mut comps = Vec::with_capacity(n);
        let mut xi = vec![0.0; d];
        let mut x = vec![0.0; d];
        for _ in 0..n {
            let r = rng.uniform();
            let mut acc = 0.0;
            let mut k = self.k() - 1;
            for (j, w) in self.weights.iter().enumerate() {
                acc += w;
                if r < acc {
                    k = j;
                    break;
                }
            }
            rng.fill_normal(&mut xi);
            self.sigmas[k].colour(&xi, &mut x);
            let w: f64 = chi.sample(rng);
            let scale = (self.df / w).sqrt();
            for j in 0..d {
                x[j] = self.means[k][j] + x[j] * scale;
            }
            for (j, xj) in x.iter().enumerate() {
                let v = self.marginal_cdf(j, *xj);
                u.push(v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0));
            }
            logs.push(self.logpdf_data_scale(&x));
            comps.push(k);
        }
        Ok((CopulaMatrix::new(u, n, d, Scale::Copula)?, logs, comps))
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<(CopulaMatrix, Vec<f64>)> {
        let (u, l, _) = self.sample_with_components(n, rng)?;
        Ok((u, l))
    }

    /// Relabel dimensions: new dimension `j` is old dimension `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let d = self.d();
        if perm.len() != d {
            return Err(Error::size("permutation length mismatch"));
        }
        let means = self
            .means
            .iter()
            .map(|m| perm.iter().map(|&p| m[p]).collect())
            .collect();
        let sigmas = self
            .sigmas
            .iter()
            .map(|s| CorrelationMatrix::new(DMatrix::from_fn(d, d, |i, j| s.get(perm[i], perm[j]))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.weights.clone(), self.df, means, sigmas)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let d = self.d();
        let mut params = vec![self.df];
        params.extend_from_slice(&self.weights);
        for m in &self.means {
            params.extend_from_slice(m);
        }
        for s in &self.sigmas {
            params.extend(s.sigma().iter().copied());
        }
        Checkpoint {
            kind: ArtifactKind::MixtureTOracle,
            dims: vec![d as u32, self.k() as u32],
            embedding: TimeEmbedding::None,
            params,
            metadata: vec![],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ArtifactKind::MixtureTOracle || ck.dims.len() != 2 {
            return Err(Error::format("checkpoint does not hold a mixture-t oracle"));
        }
        let (d, k) = (ck.dims[0] as usize, ck.dims[1] as usize);
        if ck.params.len() != 1 + k + k * d + k * d * d {
            return Err(Error::format("mixture-t checkpoint has wrong parameter count"));
        }
        let p = &ck.params;
        let weights = p[1..1 + k].to_vec();
        let off = 1 + k;
        let means = (0..k).map(|c| p[off + c * d..off + (c + 1) * d].to_vec()).collect();
        let off = off + k * d;
        let sigmas = (0..k)
            .map(|c| {
                CorrelationMatrix::new(DMatrix::from_column_slice(
                    d,
                    d,
                    &p[off + c * d * d..off + (c + 1) * d * d],
                ))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::format(format!("invalid stored correlation: {e}")))?;
        Self::new(weights, p[0], means, sigmas)
    }
}

/// The simulation-study oracle: four components with weights
/// (0.3, 0.3, 0.2, 0.2), 10 degrees of freedom, means `4x` with
/// `x ~ N(0, I_d)` and random-spectrum correlations.
pub fn mixture_t_build(d: usize, seed: u64) -> Result<MixtureTCopula> {
    if d < 2 {
        return Err(Error::config(format!("mixture-t oracle needs d >= 2, got {d}")));
    }
    let mut rng = RngStream::new(seed, 0x6d74);
    let k = DEFAULT_WEIGHTS.len();
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| rng.normals(d).into_iter().map(|v| MEAN_SCALE * v).collect())
        .collect();
    let sigmas = (0..k)
        .map(|_| build_correlation(d, CorrelationSource::RandomEigen(&mut rng)))
        .collect::<Result<Vec<_>>>()?;
    MixtureTCopula::new(DEFAULT_WEIGHTS.to_vec(), DEFAULT_DF, means, sigmas)
}

pub fn mixture_t_copula_logpdf(mt: &MixtureTCopula, u: &[f64]) -> Result<f64> {
    mt.logpdf(u)
}

pub fn mixture_t_sample(mt: &MixtureTCopula, n: usize, rng: &mut RngStream) -> Result<(CopulaMatrix, Vec<f64>)> {
    mt.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ks_critical, ks_uniform};

    #[test]
    fn build_invariants() {
        let mt = mixture_t_build(5, 3).unwrap();
        assert_eq!(mt.weights.iter().sum::<f64>(), 1.0);
        for s in &mt.sigmas {
            assert!((s.eigenvalues().iter().sum::<f64>() - 5.0).abs() < 1e-6);
        }
        for i in 0..5 {
            assert!(mt.marginal_cdf(i, -1e6) < 1e-12);
            assert!(mt.marginal_cdf(i, 1e6) > 1.0 - 1e-12);
            let tab = &mt.marginals[i];
            assert!(tab.cdf.windows(2).all(|w| w[1] > w[0]));
        }
        assert!(mixture_t_build(1, 3).is_err());
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        let left = (m - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + m)) + f(m));
        let right = (b - m) / 6.0 * (f(m) + 4.0 * f(0.5 * (m + b)) + f(b));
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive_simpson(f, a, m, tol / 2.0, depth - 1) + adaptive_simpson(f, m, b, tol / 2.0, depth - 1)
        }
    }

    #[test]
    fn marginal_cdf_matches_quadrature() {
        let mt = mixture_t_build(3, 8).unwrap();
        let i = 1;
        let f = |t: f64| mt.marginal_log_pdf(i, t).exp();
        let mut rng = RngStream::new(8, 1);
        let centre = mt.marginals[i].locations[0];
        let mut probes: Vec<f64> = (0..1000).map(|_| centre + 30.0 * (rng.uniform() - 0.5)).collect();
        probes.sort_by(f64::total_cmp);
        // far tail mass from the exact CDF, the rest by quadrature
        let lo = -400.0;
        let mut acc = mt.marginal_cdf(i, lo);
        let mut prev = lo;
        for &x in &probes {
            acc += adaptive_simpson(&f, prev, x, 1e-13, 40);
            prev = x;
            assert!((mt.marginal_cdf(i, x) - acc).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn quantile_round_trip() {
        let mt = mixture_t_build(4, 11).unwrap();
        let mut rng = RngStream::new(11, 2);
        for _ in 0..1000 {
            let u = rng.uniform();
            let i = rng.below(4);
            let x = mt.marginal_quantile(i, u).unwrap();
            assert!((mt.marginal_cdf(i, x) - u).abs() <= 1e-7);
        }
        for u in [1e-12, 1e-6, 1.0 - 1e-9] {
            let x = mt.marginal_quantile(0, u).unwrap();
            assert!((mt.marginal_cdf(0, x) - u).abs() <= 1e-7 * u.max(1e-9).min(1.0) + 1e-15);
        }
    }

    #[test]
    fn large_df_single_component_is_independence() {
        let mt = MixtureTCopula::new(
            vec![1.0],
            1e6,
            vec![vec![0.0; 3]],
            vec![CorrelationMatrix::identity(3).unwrap()],
        )
        .unwrap();
        let mut rng = RngStream::new(2, 0);
        for _ in 0..10 {
            let u: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
            assert!(mt.logpdf(&u).unwrap().abs() <= 1e-3);
        }
    }

    #[test]
    fn sample_logpdf_self_consistent() {
        let mt = mixture_t_build(4, 5).unwrap();
        let mut rng = RngStream::new(5, 1);
        let (u, logs, _) = mt.sample_with_components(500, &mut rng).unwrap();
        for (row, l) in u.rows().zip(&logs) {
            let back = mt.logpdf(row).unwrap();
            assert!((back - l).abs() < 1e-10 * l.abs().max(1.0), "{back} vs {l}");
        }
    }

    #[test]
    fn marginals_uniform_and_component_frequencies() {
        let mt = mixture_t_build(3, 6).unwrap();
        let mut rng = RngStream::new(6, 1);
        let n = 100_000;
        let (u, _, comps) = mt.sample_with_components(n, &mut rng).unwrap();
        for j in 0..3 {
            assert!(ks_uniform(&u.column(j)) < ks_critical(n, 1e-3));
        }
        for (k, &w) in mt.weights.iter().enumerate() {
            let freq = comps.iter().filter(|&&c| c == k).count() as f64 / n as f64;
            assert!((freq - w).abs() <= 3.0 * (w * (1.0 - w) / n as f64).sqrt() + 1e-3);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mt = mixture_t_build(3, 9).unwrap();
        let perm = [2, 0, 1];
        let pm = mt.permuted(&perm).unwrap();
        let mut rng = RngStream::new(9, 1);
        for _ in 0..10 {
            let u: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
            let up: Vec<f64> = perm.iter().map(|&p| u[p]).collect();
            assert!((mt.logpdf(&u).unwrap() - pm.logpdf(&up).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mt = mixture_t_build(3, 4).unwrap();
        let ck = Checkpoint::from_bytes(&mt.to_checkpoint().to_bytes()).unwrap();
        let back = MixtureTCopula::from_checkpoint(&ck).unwrap();
        assert_eq!(back.means, mt.means);
        assert_eq!(back.sigmas, mt.sigmas);
        assert_eq!(back.weights, mt.weights);
    }
}
