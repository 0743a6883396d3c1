//! Copula density and score from class probabilities.

use super::{CdcModel, ClassProbs};
use crate::data::{clamp_unit, CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::normal;
use crate::processes::CorrelationMatrix;

fn gaussian_row(u: &[f64]) -> Result<Vec<f64>> {
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

fn check_input(probs: &dyn ClassProbs, u: &CopulaMatrix, sigma: Option<&CorrelationMatrix>) -> Result<()> {
    if u.scale() != Scale::Copula {
        return Err(Error::domain("density and score take copula-scale input"));
    }
    if u.d() != probs.dim() {
        return Err(Error::size(format!(
            "model has d = {}, input has d = {}",
            probs.dim(),
            u.d()
        )));
    }
    if let Some(s) = sigma {
        if s.d() != u.d() {
            return Err(Error::size("correlation has the wrong dimension"));
        }
    }
    Ok(())
}

/// `log N(z; 0, Σ) - log N(z; 0, I)`.
fn correlated_factor(sigma: &CorrelationMatrix, z: &[f64]) -> f64 {
    let norm2: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * sigma.log_det() - 0.5 * (sigma.quad_inverse(z) - norm2)
}

/// Log copula densities `log P(T_1|z) - log P(T_k|z)` at `z = Φ⁻¹(u)`,
/// plus the correlated-terminal correction when `sigma` is given.
pub fn log_density_with(
    probs: &dyn ClassProbs,
    sigma: Option<&CorrelationMatrix>,
    u: &CopulaMatrix,
) -> Result<Vec<f64>> {
    check_input(probs, u, sigma)?;
    let k = probs.n_classes();
    u.rows()
        .map(|row| {
            let z = gaussian_row(row)?;
            let lp = probs.log_probs(&z)?;
            let mut l = lp[0] - lp[k - 1];
            if let Some(s) = sigma {
                l += correlated_factor(s, &z);
            }
            if l.is_nan() {
                return Err(Error::numeric(format!("log density is NaN at {row:?}")));
            }
            Ok(l)
        })
        .collect()
}

pub fn density_with(probs: &dyn ClassProbs, sigma: Option<&CorrelationMatrix>, u: &CopulaMatrix) -> Result<Vec<f64>> {
    Ok(log_density_with(probs, sigma, u)?.into_iter().map(f64::exp).collect())
}

/// `w(u)` with `w_i = 1 / φ(Φ⁻¹(u_i))`.
pub fn weight_vector(u: &[f64]) -> Result<Vec<f64>> {
    Ok(gaussian_row(u)?.into_iter().map(|z| 1.0 / normal::pdf(z)).collect())
}

/// Copula scores `∇_u log c_s(u)` of the diffused copula at class `s`.
pub fn score_with(
    probs: &dyn ClassProbs,
    sigma: Option<&CorrelationMatrix>,
    u: &CopulaMatrix,
    s: usize,
) -> Result<CopulaMatrix> {
    check_input(probs, u, sigma)?;
    let k = probs.n_classes();
    if s >= k {
        return Err(Error::Index(format!("class {s} of {k}")));
    }
    let d = u.d();
    let mut out = Vec::with_capacity(u.n() * d);
    let mut inv_z = vec![0.0; d];
    for row in u.rows() {
        let z = gaussian_row(row)?;
        let mut g = probs.grad_log_ratio(&z, s, k - 1)?;
        if let Some(sig) = sigma {
            sig.mul_inverse(&z, &mut inv_z);
            for j in 0..d {
                g[j] += z[j] - inv_z[j];
            }
        }
        for j in 0..d {
            let v = g[j] / normal::pdf(z[j]);
            if !v.is_finite() {
                return Err(Error::numeric(format!("non-finite score at {row:?}")));
            }
            out.push(v);
        }
    }
    CopulaMatrix::new(out, u.n(), d, Scale::Data)
}

pub fn cdc_log_density(model: &CdcModel, u: &CopulaMatrix) -> Result<Vec<f64>> {
    log_density_with(&model.net, model.sigma.as_ref(), u)
}

pub fn cdc_density(model: &CdcModel, u: &CopulaMatrix) -> Result<Vec<f64>> {
    density_with(&model.net, model.sigma.as_ref(), u)
}

pub fn cdc_score(model: &CdcModel, u: &CopulaMatrix, s: usize) -> Result<CopulaMatrix> {
    score_with(&model.net, model.sigma.as_ref(), u, s)
}
