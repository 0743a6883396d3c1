//! The Gaussian copula.

use nalgebra::DMatrix;

use crate::data::{clamp_unit, CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::neural::{ArtifactKind, Checkpoint, TimeEmbedding};
use crate::normal;
use crate::processes::{build_correlation, CorrelationMatrix, CorrelationSource};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCopula {
    pub sigma: CorrelationMatrix,
}

impl GaussianCopula {
    pub fn new(sigma: CorrelationMatrix) -> Self {
        Self { sigma }
    }

    /// Fit by the correlation of the data on the Gaussian scale.
    pub fn fit(data_u: &CopulaMatrix) -> Result<Self> {
        let sigma = build_correlation(data_u.d(), CorrelationSource::EmpiricalGaussianScale(data_u))?;
        Ok(Self { sigma })
    }

    pub fn d(&self) -> usize {
        self.sigma.d()
    }

    /// `log N(z; 0, Σ) - Σ log φ(z_i)`.
    pub fn logpdf_gaussian_scale(&self, z: &[f64]) -> f64 {
        let quad = self.sigma.quad_inverse(z);
        let norm2: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * self.sigma.log_det() - 0.5 * (quad - norm2)
    }

    pub fn logpdf(&self, u: &[f64]) -> Result<f64> {
        Ok(self.logpdf_gaussian_scale(&self.to_z(u)?))
    }

    pub fn pdf(&self, u: &[f64]) -> Result<f64> {
        Ok(self.logpdf(u)?.exp())
    }

    /// `∇_u log c(u) = w(u) ⊙ (z - Σ⁻¹ z)` with `w_i = 1 / φ(z_i)`.
    pub fn score(&self, u: &[f64]) -> Result<Vec<f64>> {
        let z = self.to_z(u)?;
        let mut inv_z = vec![0.0; z.len()];
        self.sigma.mul_inverse(&z, &mut inv_z);
        Ok(z.iter()
            .zip(&inv_z)
            .map(|(zi, iz)| (zi - iz) / normal::pdf(*zi))
            .collect())
    }

    fn to_z(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.d() {
            return Err(Error::size(format!(
                "expected {} coordinates, got {}",
                self.d(),
                u.len()
            )));
        }
        u.iter()
            .map(|&v| {
                if v > 0.0 && v < 1.0 {
                    Ok(normal::quantile(clamp_unit(v)))
                } else {
                    Err(Error::domain(format!("copula coordinate {v} outside (0,1)")))
                }
            })
            .collect()
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<CopulaMatrix> {
        let d = self.d();
        let mut v = vec![0.0; n * d];
        let mut xi = vec![0.0; d];
        for row in v.chunks_exact_mut(d) {
            rng.fill_normal(&mut xi);
            self.sigma.colour(&xi, row);
            for x in row.iter_mut() {
                *x = normal::cdf(*x);
            }
        }
        CopulaMatrix::new(v, n, d, Scale::Copula)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: ArtifactKind::GaussianOracle,
            dims: vec![self.d() as u32],
            embedding: TimeEmbedding::None,
            params: self.sigma.sigma().iter().copied().collect(),
            metadata: vec![],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ArtifactKind::GaussianOracle || ck.dims.len() != 1 {
            return Err(Error::format("checkpoint does not hold a Gaussian copula"));
        }
        let d = ck.dims[0] as usize;
        if ck.params.len() != d * d {
            return Err(Error::format("Gaussian copula checkpoint has wrong parameter count"));
        }
        let sigma = CorrelationMatrix::new(DMatrix::from_column_slice(d, d, &ck.params))
            .map_err(|e| Error::format(format!("invalid stored correlation: {e}")))?;
        Ok(Self { sigma })
    }
}

pub fn gaussian_copula_logpdf(gc: &GaussianCopula, u: &[f64]) -> Result<f64> {
    gc.logpdf(u)
}

pub fn gaussian_copula_sample(gc: &GaussianCopula, n: usize, rng: &mut RngStream) -> Result<CopulaMatrix> {
    gc.sample(n, rng)
}
