//! Ornstein–Uhlenbeck forward process on the Gaussian scale, sampled with
//! its exact Gaussian transition.

use crate::data::{CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::processes::CorrelationMatrix;
use crate::rng::RngStream;

/// Mean decay `e^{-t}` and noise scale `√(1 - e^{-2t})` of the transition.
#[inline]
pub fn ou_coefficients(t: f64) -> (f64, f64) {
    let decay = (-t).exp();
    let noise = (-(-2.0 * t).exp_m1()).sqrt();
    (decay, noise)
}

/// `out = e^{-t} z0 + √(1 - e^{-2t}) eps` for one row.
#[inline]
pub fn ou_step_row(z0: &[f64], t: f64, eps: &[f64], out: &mut [f64]) {
    let (a, b) = ou_coefficients(t);
    for ((o, z), e) in out.iter_mut().zip(z0).zip(eps) {
        *o = a * z + b * e;
    }
}

fn check(z0: &CopulaMatrix, t: f64, sigma: Option<&CorrelationMatrix>) -> Result<()> {
    if z0.scale() != Scale::Gaussian {
        return Err(Error::domain("OU forward process runs on the Gaussian scale"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("OU time must be finite and >= 0, got {t}")));
    }
    if let Some(s) = sigma {
        if s.d() != z0.d() {
            return Err(Error::size(format!(
                "correlation is {}x{} but data has d = {}",
                s.d(),
                s.d(),
                z0.d()
            )));
        }
    }
    Ok(())
}

/// One exact draw of `z_t` given `z_0`, with stationary law `N(0, I)` or
/// `N(0, Σ)` when `sigma` is given.
pub fn ou_forward(
    z0: &CopulaMatrix,
    t: f64,
    sigma: Option<&CorrelationMatrix>,
    rng: &mut RngStream,
) -> Result<CopulaMatrix> {
    check(z0, t, sigma)?;
    let d = z0.d();
    let mut eps = vec![0.0; z0.n() * d];
    let mut xi = vec![0.0; d];
    for row in eps.chunks_exact_mut(d) {
        rng.fill_normal(&mut xi);
        match sigma {
            Some(s) => s.colour(&xi, row),
            None => row.copy_from_slice(&xi),
        }
    }
    ou_forward_with_noise(z0, t, &eps)
}

/// Test hook: the transition with caller-supplied noise `eps` (already
/// coloured in the correlated case), laid out like `z0`.
pub fn ou_forward_with_noise(z0: &CopulaMatrix, t: f64, eps: &[f64]) -> Result<CopulaMatrix> {
    check(z0, t, None)?;
    if eps.len() != z0.values().len() {
        return Err(Error::size(format!(
            "noise has {} entries, data has {}",
            eps.len(),
            z0.values().len()
        )));
    }
    let mut out = vec![0.0; eps.len()];
    ou_step_row(z0.values(), t, eps, &mut out);
    CopulaMatrix::new(out, z0.n(), z0.d(), Scale::Gaussian)
}
