//! The classification-diffusion copula.
//!
//! A classifier predicts which diffusion time `T_s` produced a
//! Gaussian-scale point `z`. The log ratio of its first and last class
//! probabilities is the log copula density at `Φ(z)`, and differences of
//! class log-probability gradients give copula scores at every time.
//!
//! The last class is the stationary law of the forward process, `N(0, I)`
//! or `N(0, Σ)`, regardless of the terminal grid time.

mod density;
mod oracle;
mod sample;
mod train;

pub use density::{cdc_density, cdc_log_density, cdc_score, density_with, log_density_with, score_with, weight_vector};
pub use oracle::{analytic_class_probs, AnalyticGaussianProbs};
pub use sample::{cdc_sample, sample_with, SampleOptions};
pub use train::{cdc_loss, draw_batch, loss_with, train_cdc, DiffusedBatch, LossParts, LossRecord};

use crate::error::{Error, Result};
use crate::grid::{GridScheme, TimeGrid};
use crate::neural::{Checkpoint, Head, MlpModel};
use crate::processes::CorrelationMatrix;

/// A conditional distribution over diffusion classes given a
/// Gaussian-scale point.
pub trait ClassProbs {
    fn n_classes(&self) -> usize;

    fn dim(&self) -> usize;

    /// Normalised log-probabilities of all classes at `z`.
    fn log_probs(&self, z: &[f64]) -> Result<Vec<f64>>;

    /// `∇_z log P(T_a | z) - ∇_z log P(T_b | z)`.
    fn grad_log_ratio(&self, z: &[f64], a: usize, b: usize) -> Result<Vec<f64>>;
}

impl ClassProbs for MlpModel {
    fn n_classes(&self) -> usize {
        self.head().width()
    }

    fn dim(&self) -> usize {
        self.data_dim()
    }

    fn log_probs(&self, z: &[f64]) -> Result<Vec<f64>> {
        MlpModel::log_probs(self, z, 0.0)
    }

    fn grad_log_ratio(&self, z: &[f64], a: usize, b: usize) -> Result<Vec<f64>> {
        let k = self.n_classes();
        if a >= k || b >= k {
            return Err(Error::Index(format!("classes {a}, {b} of {k}")));
        }
        // the softmax normaliser cancels in a log ratio
        let mut coeff = vec![0.0; k];
        coeff[a] += 1.0;
        coeff[b] -= 1.0;
        self.grad_input_linear(z, 0.0, &coeff)
    }
}

#[derive(Debug, Clone)]
pub struct CdcModel {
    pub net: MlpModel,
    pub grid: TimeGrid,
    pub sigma: Option<CorrelationMatrix>,
    /// Cross-entropy weight used (or settled on) during training.
    pub alpha: f64,
    pub history: Vec<LossRecord>,
}

impl CdcModel {
    pub fn new(net: MlpModel, grid: TimeGrid, sigma: Option<CorrelationMatrix>, alpha: f64) -> Result<Self> {
        match net.head() {
            Head::SoftmaxClasses(k) if k == grid.k() => {}
            head => {
                return Err(Error::config(format!(
                    "classifier head {head:?} does not match a grid of {} times",
                    grid.k()
                )))
            }
        }
        if let Some(s) = &sigma {
            if s.d() != net.data_dim() {
                return Err(Error::size("correlation and network disagree on dimension"));
            }
        }
        Ok(Self {
            net,
            grid,
            sigma,
            alpha,
            history: Vec::new(),
        })
    }

    pub fn d(&self) -> usize {
        self.net.data_dim()
    }

    pub fn k(&self) -> usize {
        self.grid.k()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = vec![
            ("model".to_string(), "cdc".to_string()),
            ("alpha".to_string(), self.alpha.to_string()),
            ("grid_scheme".to_string(), self.grid.scheme().name().to_string()),
            ("grid_times".to_string(), join(self.grid.times())),
        ];
        if let GridScheme::PowerLaw { exponent } = self.grid.scheme() {
            meta.push(("grid_exponent".to_string(), exponent.to_string()));
        }
        if let Some(s) = &self.sigma {
            meta.push(("sigma".to_string(), join(s.sigma().as_slice())));
        }
        self.net.to_checkpoint(meta)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("model") != Some("cdc") {
            return Err(Error::format(
                "checkpoint does not hold a classification-diffusion copula",
            ));
        }
        let net = MlpModel::from_checkpoint(ck)?;
        let times = split(
            ck.meta("grid_times")
                .ok_or_else(|| Error::format("missing grid_times"))?,
        )?;
        let scheme = match ck.meta("grid_scheme") {
            Some("kl") => GridScheme::Kl,
            Some("linear") => GridScheme::Linear,
            Some("power") => GridScheme::PowerLaw {
                exponent: ck.meta_f64("grid_exponent")?,
            },
            other => return Err(Error::format(format!("unknown grid scheme {other:?}"))),
        };
        let grid = TimeGrid::from_times(times, scheme)?;
        let sigma = match ck.meta("sigma") {
            Some(s) => {
                let v = split(s)?;
                let d = net.data_dim();
                if v.len() != d * d {
                    return Err(Error::format("stored correlation has wrong size"));
                }
                Some(CorrelationMatrix::new(nalgebra::DMatrix::from_column_slice(d, d, &v))?)
            }
            None => None,
        };
        Self::new(net, grid, sigma, ck.meta_f64("alpha")?)
    }
}

pub(crate) fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub(crate) fn split(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::format(format!("bad number '{t}' in metadata")))
        })
        .collect()
}
