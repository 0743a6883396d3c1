//! How fast each forward process forgets dependence, measured by W2 to
//! fresh uniform samples.

use crate::data::{CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::metrics::wasserstein2;
use crate::processes::{ou_forward, reflection_forward, CorrelationMatrix};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
pub enum ForwardProcess<'a> {
    Ou { sigma: Option<&'a CorrelationMatrix> },
    Reflection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Point {
    pub t: f64,
    pub w2: f64,
    /// W2 between two independent uniform samples of the same size.
    pub baseline: f64,
}

fn uniform(n: usize, d: usize, rng: &mut RngStream) -> Result<CopulaMatrix> {
    CopulaMatrix::new((0..n * d).map(|_| rng.uniform()).collect(), n, d, Scale::Copula)
}

/// W2-to-uniform of the data pushed forward to each time, using the first
/// `n_ref` rows.
pub fn forward_w2_curve(
    data_u: &CopulaMatrix,
    process: ForwardProcess<'_>,
    times: &[f64],
    n_ref: usize,
    rng: &mut RngStream,
) -> Result<Vec<W2Point>> {
    forward_w2_curve_averaged(data_u, process, times, n_ref, 1, rng)
}

/// As [`forward_w2_curve`], averaging every point over `repeats` fresh
/// noise and uniform draws.
pub fn forward_w2_curve_averaged(
    data_u: &CopulaMatrix,
    process: ForwardProcess<'_>,
    times: &[f64],
    n_ref: usize,
    repeats: usize,
    rng: &mut RngStream,
) -> Result<Vec<W2Point>> {
    if data_u.scale() != Scale::Copula {
        return Err(Error::domain("forward W2 curve expects copula-scale data"));
    }
    if n_ref == 0 || n_ref > data_u.n() {
        return Err(Error::size(format!("n_ref {n_ref} must be in 1..={}", data_u.n())));
    }
    let repeats = repeats.max(1);
    let d = data_u.d();
    let idx: Vec<usize> = (0..n_ref).collect();
    let base = data_u.select_rows(&idx)?;
    let z0 = base.to_gaussian_scale()?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let (mut w, mut b) = (0.0, 0.0);
        for _ in 0..repeats {
            let pushed = match &process {
                ForwardProcess::Ou { sigma } => ou_forward(&z0, t, *sigma, rng)?.to_copula_scale()?,
                ForwardProcess::Reflection => {
                    let v = rng.normals(n_ref * d);
                    reflection_forward(&base, &v, t)?.positions
                }
            };
            w += wasserstein2(&pushed, &uniform(n_ref, d, rng)?)?;
            b += wasserstein2(&uniform(n_ref, d, rng)?, &uniform(n_ref, d, rng)?)?;
        }
        out.push(W2Point {
            t,
            w2: w / repeats as f64,
            baseline: b / repeats as f64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_data_starts_near_baseline() {
        let mut rng = RngStream::new(31, 0);
        let data = uniform(200, 2, &mut rng).unwrap();
        for process in [ForwardProcess::Ou { sigma: None }, ForwardProcess::Reflection] {
            let c = forward_w2_curve(&data, process, &[0.0], 200, &mut rng).unwrap();
            assert!(c[0].w2 <= 2.0 * c[0].baseline);
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut rng = RngStream::new(31, 1);
        let data = uniform(20, 2, &mut rng).unwrap();
        assert!(forward_w2_curve(&data, ForwardProcess::Reflection, &[0.0], 21, &mut rng).is_err());
    }
}
