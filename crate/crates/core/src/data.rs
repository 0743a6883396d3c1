//! Observation batches on the data, copula and Gaussian scales.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::normal;

/// Copula-scale values are clamped into `[CLAMP, 1 - CLAMP]` before Φ⁻¹.
pub const CLAMP: f64 = 1e-7;

static CLAMP_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of copula-scale entries clamped before a Φ⁻¹ since process start.
pub fn clamp_warnings() -> u64 {
    CLAMP_COUNT.load(Ordering::Relaxed)
}

/// Clamp a copula-scale value away from {0, 1}, counting each clamp.
pub fn clamp_unit(u: f64) -> f64 {
    if u < CLAMP {
        CLAMP_COUNT.fetch_add(1, Ordering::Relaxed);
        log::debug!("clamping copula value {u} to {CLAMP}");
        CLAMP
    } else if u > 1.0 - CLAMP {
        CLAMP_COUNT.fetch_add(1, Ordering::Relaxed);
        log::debug!("clamping copula value {u} to {}", 1.0 - CLAMP);
        1.0 - CLAMP
    } else {
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Data,
    Copula,
    Gaussian,
}

/// An `n x d` batch of observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaMatrix {
    values: Vec<f64>,
    n: usize,
    d: usize,
    scale: Scale,
}

impl CopulaMatrix {
    pub fn new(values: Vec<f64>, n: usize, d: usize, scale: Scale) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::size(format!("empty matrix {n}x{d}")));
        }
        if values.len() != n * d {
            return Err(Error::size(format!(
                "{} values cannot fill a {n}x{d} matrix",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite entry {bad}")));
        }
        if scale == Scale::Copula {
            if let Some(bad) = values.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::domain(format!("copula-scale entry {bad} outside (0,1)")));
            }
        }
        Ok(Self { values, n, d, scale })
    }

    pub fn from_rows(rows: &[Vec<f64>], scale: Scale) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::size("ragged rows"));
        }
        Self::new(rows.concat(), n, d, scale)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows selected by index, same scale.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut v = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            if i >= self.n {
                return Err(Error::Index(format!("row {i} of {}", self.n)));
            }
            v.extend_from_slice(self.row(i));
        }
        Self::new(v, idx.len(), self.d, self.scale)
    }

    /// Entrywise Φ⁻¹, copula scale to Gaussian scale.
    pub fn to_gaussian_scale(&self) -> Result<Self> {
        if self.scale != Scale::Copula {
            return Err(Error::domain(format!(
                "to_gaussian_scale expects copula scale, got {:?}",
                self.scale
            )));
        }
        let values = self.values.iter().map(|&u| normal::quantile(clamp_unit(u))).collect();
        Ok(Self {
            values,
            n: self.n,
            d: self.d,
            scale: Scale::Gaussian,
        })
    }

    /// Entrywise Φ, Gaussian scale to copula scale.
    pub fn to_copula_scale(&self) -> Result<Self> {
        if self.scale != Scale::Gaussian {
            return Err(Error::domain(format!(
                "to_copula_scale expects Gaussian scale, got {:?}",
                self.scale
            )));
        }
        let values = self.values.iter().map(|&z| normal::cdf(z)).collect();
        Ok(Self {
            values,
            n: self.n,
            d: self.d,
            scale: Scale::Copula,
        })
    }

    /// Per-column empirical CDF: average rank / (n + 1).
    pub fn pseudo_observations(&self) -> Result<Self> {
        if self.n < 2 {
            return Err(Error::size(format!(
                "pseudo-observations need at least 2 rows, got {}",
                self.n
            )));
        }
        let mut out = vec![0.0; self.values.len()];
        let denom = (self.n + 1) as f64;
        for j in 0..self.d {
            let col = self.column(j);
            let ranks = average_ranks(&col);
            for (i, r) in ranks.into_iter().enumerate() {
                out[i * self.d + j] = r / denom;
            }
        }
        Self::new(out, self.n, self.d, Scale::Copula)
    }

    pub fn read_csv(path: impl AsRef<Path>, has_header: bool, scale: Scale) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| Error::format(e.to_string()))?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::format(e.to_string()))?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::format(format!("not a number: {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows, scale)
    }

    /// Writes one row per observation. Values use Rust's shortest
    /// round-trip formatting so reading back is lossless.
    pub fn write_csv(&self, path: impl AsRef<Path>, header: Option<&[String]>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::format(e.to_string()))?;
        if let Some(h) = header {
            w.write_record(h).map_err(|e| Error::format(e.to_string()))?;
        }
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| Error::format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}
