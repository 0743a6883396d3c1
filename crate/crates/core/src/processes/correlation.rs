//! Correlation matrices for the correlated OU process and the Gaussian copula.

use nalgebra::{DMatrix, DVector};

use crate::data::{CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest off-diagonal magnitude kept in an empirical correlation.
pub const MAX_ABS_CORR: f64 = 1.0 - 1e-6;

const PROJECTION_MAX_ITER: usize = 100;
const PROJECTION_TOL: f64 = 1e-10;
const EIGEN_FLOOR: f64 = 1e-8;

/// Symmetric positive-definite matrix with unit diagonal, stored together
/// with its Cholesky factor `H` (`H Hᵀ = Σ`) and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if d == 0 || sigma.ncols() != d {
            return Err(Error::size(format!(
                "correlation matrix must be square and non-empty, got {}x{}",
                d,
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("correlation matrix has non-finite entries"));
        }
        for i in 0..d {
            if (sigma[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!("diagonal entry {i} is {}", sigma[(i, i)])));
            }
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                    return Err(Error::domain(format!("not symmetric at ({i},{j})")));
                }
            }
        }
        let mut sigma = sigma;
        for i in 0..d {
            sigma[(i, i)] = 1.0;
            for j in 0..i {
                let m = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
                sigma[(i, j)] = m;
                sigma[(j, i)] = m;
            }
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numeric("correlation matrix is not positive definite"))?;
        let inverse = chol.inverse();
        Ok(Self {
            chol: chol.l(),
            sigma,
            inverse,
        })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d))
    }

    /// 2x2 matrix with off-diagonal `rho`.
    pub fn bivariate(rho: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))
    }

    /// Equicorrelation matrix with every off-diagonal equal to `rho`.
    pub fn equicorrelated(d: usize, rho: f64) -> Result<Self> {
        let mut m = DMatrix::from_element(d, d, rho);
        m.fill_diagonal(1.0);
        Self::new(m)
    }

    pub fn d(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn is_identity(&self) -> bool {
        self.sigma == DMatrix::identity(self.d(), self.d())
    }

    /// `out = H x`, colouring a standard normal vector.
    pub fn colour(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d();
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.chol[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }

    /// `out = Σ x`.
    pub fn mul_sigma(&self, x: &[f64], out: &mut [f64]) {
        mat_vec(&self.sigma, x, out);
    }

    /// `out = Σ⁻¹ x`.
    pub fn mul_inverse(&self, x: &[f64], out: &mut [f64]) {
        mat_vec(&self.inverse, x, out);
    }

    /// `xᵀ Σ⁻¹ x`.
    pub fn quad_inverse(&self, x: &[f64]) -> f64 {
        let d = self.d();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.inverse[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Symmetric eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.sigma.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let d = m.nrows();
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            acc += m[(i, j)] * x[j];
        }
        out[i] = acc;
    }
}

#[derive(Debug)]
pub enum CorrelationSource<'a> {
    Identity,
    /// Pearson correlation of Gaussian-scale data.
    EmpiricalGaussianScale(&'a CopulaMatrix),
    /// Random spectrum of `d` uniforms rescaled to sum to `d`, rotated by a
    /// Haar orthogonal matrix and brought to unit diagonal by Givens rotations.
    RandomEigen(&'a mut RngStream),
}

pub fn build_correlation(d: usize, source: CorrelationSource<'_>) -> Result<CorrelationMatrix> {
    if d == 0 {
        return Err(Error::config("correlation dimension must be at least 1"));
    }
    match source {
        CorrelationSource::Identity => CorrelationMatrix::identity(d),
        CorrelationSource::EmpiricalGaussianScale(data) => empirical(d, data),
        CorrelationSource::RandomEigen(rng) => random_eigen(d, rng),
    }
}

fn empirical(d: usize, data: &CopulaMatrix) -> Result<CorrelationMatrix> {
    if data.d() != d {
        return Err(Error::size(format!("data has {} columns, expected {d}", data.d())));
    }
    if data.n() < 2 {
        return Err(Error::size("empirical correlation needs at least 2 rows"));
    }
    let z = match data.scale() {
        Scale::Gaussian => data.clone(),
        Scale::Copula => data.to_gaussian_scale()?,
        Scale::Data => {
            return Err(Error::domain(
                "empirical correlation expects Gaussian- or copula-scale data",
            ))
        }
    };
    let n = z.n() as f64;
    let mut mean = vec![0.0; d];
    for row in z.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in z.rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    let mut corr = DMatrix::identity(d, d);
    for i in 0..d {
        for j in 0..i {
            let denom = (cov[(i, i)] * cov[(j, j)]).sqrt();
            let r = if denom > 0.0 {
                (cov[(i, j)] / denom).clamp(-MAX_ABS_CORR, MAX_ABS_CORR)
            } else {
                log::warn!("constant column in empirical correlation; using 0 for ({i},{j})");
                0.0
            };
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    match CorrelationMatrix::new(corr.clone()) {
        Ok(c) => Ok(c),
        Err(_) => CorrelationMatrix::new(nearest_correlation(&corr)?),
    }
}

/// Higham's alternating projections with Dykstra's correction onto the set
/// of unit-diagonal matrices and the PSD cone.
pub fn nearest_correlation(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let mut y = a.clone();
    let mut ds = DMatrix::zeros(d, d);
    for _ in 0..PROJECTION_MAX_ITER {
        let r = &y - &ds;
        let eig = r.clone().symmetric_eigen();
        let clipped = DVector::from_iterator(d, eig.eigenvalues.iter().map(|&l| l.max(EIGEN_FLOOR)));
        let x = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        ds = &x - &r;
        let mut next = x;
        next.fill_diagonal(1.0);
        let change = (&next - &y).norm();
        y = next;
        if change < PROJECTION_TOL && y.clone().cholesky().is_some() {
            return Ok(symmetrise(y));
        }
    }
    let y = symmetrise(y);
    if y.clone().cholesky().is_some() {
        Ok(y)
    } else {
        Err(Error::numeric(format!(
            "nearest-correlation projection not positive definite after {PROJECTION_MAX_ITER} iterations"
        )))
    }
}

fn symmetrise(m: DMatrix<f64>) -> DMatrix<f64> {
    let mut s = (&m + m.transpose()) * 0.5;
    s.fill_diagonal(1.0);
    s
}

fn random_eigen(d: usize, rng: &mut RngStream) -> Result<CorrelationMatrix> {
    let raw: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let eig: Vec<f64> = raw.iter().map(|v| v * d as f64 / total).collect();
    let q = haar_orthogonal(d, rng);
    let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    let m = givens_unit_diagonal(symmetric_part(m));
    CorrelationMatrix::new(symmetrise(m)).map_err(|e| Error::numeric(format!("random correlation not usable: {e}")))
}

fn symmetric_part(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Orthogonal matrix from the QR factorisation of a Gaussian matrix, with
/// column signs fixed so the draw is Haar distributed.
fn haar_orthogonal(d: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.normal());
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Rotation `(c, s)` making the `(i, i)` entry of the rotated matrix one.
fn givens_to_one(aii: f64, ajj: f64, aij: f64) -> (f64, f64) {
    let aiid = aii - 1.0;
    let ajjd = ajj - 1.0;
    if ajjd == 0.0 {
        return (0.0, 1.0);
    }
    let dd = (aij * aij - aiid * ajjd).max(0.0).sqrt();
    let t = (aij + dd.copysign(aij)) / ajjd;
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = if c == 0.0 { 1.0 } else { c * t };
    (c, s)
}

/// Similarity transforms by plane rotations that set each diagonal entry to
/// one while leaving the spectrum unchanged. Requires trace = dimension.
fn givens_unit_diagonal(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    for i in 0..d.saturating_sub(1) {
        if m[(i, i)] == 1.0 {
            continue;
        }
        let above = m[(i, i)] > 1.0;
        let mut j = i + 1;
        while j < d {
            if (above && m[(j, j)] < 1.0) || (!above && m[(j, j)] > 1.0) {
                break;
            }
            j += 1;
        }
        if j == d {
            j = d - 1;
        }
        let (c, s) = givens_to_one(m[(i, i)], m[(j, j)], m[(i, j)]);
        let mut g = DMatrix::identity(d, d);
        g[(i, i)] = c;
        g[(j, j)] = c;
        g[(j, i)] = -s;
        g[(i, j)] = s;
        m = g.transpose() * m * g;
    }
    m
}
