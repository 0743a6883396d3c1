//! Mixture loss and training loop.

use super::{CdcModel, ClassProbs};
use crate::config::{SigmaMode, TrainConfig};
use crate::data::{CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::neural::{Adam, Head, MixtureBatch, MixtureLoss, MlpModel, TimeEmbedding};
use crate::processes::{build_correlation, ou_coefficients, CorrelationMatrix, CorrelationSource};
use crate::rng::RngStream;

/// Diffused training examples, row-major.
#[derive(Debug, Clone)]
pub struct DiffusedBatch {
    pub d: usize,
    pub z: Vec<f64>,
    pub labels: Vec<usize>,
    /// Noise that produced each row, zero where the class adds none.
    pub eps: Vec<f64>,
    /// `√(1 - e^{-2 T_s})`, and 1 for the stationary class.
    pub scales: Vec<f64>,
}

impl DiffusedBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    pub fn eps_row(&self, i: usize) -> &[f64] {
        &self.eps[i * self.d..(i + 1) * self.d]
    }

    fn as_mixture(&self) -> MixtureBatch<'_> {
        MixtureBatch {
            inputs: (0..self.len()).map(|i| self.z_row(i)).collect(),
            labels: self.labels.clone(),
            targets: (0..self.len()).map(|i| self.eps_row(i)).collect(),
            scales: self.scales.clone(),
        }
    }
}

/// Diffuse each row of `z0` (Gaussian scale) to a uniformly drawn class.
pub fn draw_batch(
    z0: &CopulaMatrix,
    grid: &TimeGrid,
    sigma: Option<&CorrelationMatrix>,
    rng: &mut RngStream,
) -> Result<DiffusedBatch> {
    if z0.scale() != Scale::Gaussian {
        return Err(Error::domain("training batches are drawn on the Gaussian scale"));
    }
    let (n, d, k) = (z0.n(), z0.d(), grid.k());
    let mut z = Vec::with_capacity(n * d);
    let mut eps = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let mut xi = vec![0.0; d];
    for (i, row) in z0.rows().enumerate() {
        let s = rng.below(k);
        let e = &mut eps[i * d..(i + 1) * d];
        rng.fill_normal(&mut xi);
        match sigma {
            Some(c) => c.colour(&xi, e),
            None => e.copy_from_slice(&xi),
        }
        let (a, b) = if s + 1 == k {
            (0.0, 1.0)
        } else {
            ou_coefficients(grid.times()[s])
        };
        for j in 0..d {
            z.push(a * row[j] + b * e[j]);
        }
        if b == 0.0 {
            e.fill(0.0);
        }
        labels.push(s);
        scales.push(b);
    }
    Ok(DiffusedBatch {
        d,
        z,
        labels,
        eps,
        scales,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    /// Mean cross-entropy.
    pub ce: f64,
    /// Mean squared noise-prediction error.
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub alpha: f64,
    pub parts: LossParts,
}

/// Value of `α·CE + MSE` on a diffused batch for any class model.
pub fn loss_with(
    probs: &dyn ClassProbs,
    sigma: Option<&CorrelationMatrix>,
    alpha: f64,
    batch: &DiffusedBatch,
) -> Result<LossParts> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::size("empty batch"));
    }
    let k = probs.n_classes();
    let d = batch.d;
    let (mut ce, mut mse) = (0.0, 0.0);
    let (mut min_p, mut max_z) = (f64::INFINITY, 0.0f64);
    let mut pre = vec![0.0; d];
    for i in 0..n {
        let z = batch.z_row(i);
        let s = batch.labels[i];
        let lp = probs.log_probs(z)?;
        ce -= lp[s];
        min_p = min_p.min(lp[s].exp());
        max_z = z.iter().fold(max_z, |m, v| m.max(v.abs()));
        let g = probs.grad_log_ratio(z, k - 1, s)?;
        let g = match sigma {
            Some(c) => {
                c.mul_sigma(&g, &mut pre);
                &pre
            }
            None => &g,
        };
        let sc = batch.scales[i];
        mse += (0..d)
            .map(|j| {
                let r = sc * (g[j] + z[j]) - batch.eps_row(i)[j];
                r * r
            })
            .sum::<f64>();
    }
    let (ce, mse) = (ce / n as f64, mse / n as f64);
    let total = alpha * ce + mse;
    if !total.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite loss (ce {ce}, mse {mse}); min class probability {min_p:e}, max |z| {max_z}"
        )));
    }
    Ok(LossParts { total, ce, mse })
}

/// Loss of a trained model on a fresh diffusion of `batch_z0`.
pub fn cdc_loss(model: &CdcModel, batch_z0: &CopulaMatrix, rng: &mut RngStream) -> Result<LossParts> {
    let batch = draw_batch(batch_z0, &model.grid, model.sigma.as_ref(), rng)?;
    loss_with(&model.net, model.sigma.as_ref(), model.alpha, &batch)
}

fn minibatch(z: &CopulaMatrix, size: usize, rng: &mut RngStream) -> Result<CopulaMatrix> {
    let idx: Vec<usize> = (0..size).map(|_| rng.below(z.n())).collect();
    z.select_rows(&idx)
}

/// Train a classification-diffusion copula on copula-scale data.
pub fn train_cdc(data_u: &CopulaMatrix, config: &TrainConfig, rng: &mut RngStream) -> Result<CdcModel> {
    config.validate()?;
    if data_u.scale() != Scale::Copula {
        return Err(Error::domain("training data must be on the copula scale"));
    }
    if data_u.n() < 2 * config.batch {
        return Err(Error::config(format!(
            "need at least {} rows for batch size {}, got {}",
            2 * config.batch,
            config.batch,
            data_u.n()
        )));
    }
    let d = data_u.d();
    let z = data_u.to_gaussian_scale()?;
    let sigma = match config.sigma_mode {
        SigmaMode::Identity => None,
        SigmaMode::Empirical => Some(build_correlation(d, CorrelationSource::EmpiricalGaussianScale(data_u))?),
    };
    let grid = TimeGrid::new(config.scheme, config.k, config.terminal)?;
    let mut net = MlpModel::new(
        d,
        &config.hidden,
        Head::SoftmaxClasses(config.k),
        TimeEmbedding::None,
        rng,
    )?;
    let mut adam = Adam::new(net.n_params(), config.lr);
    let precond: Option<Vec<f64>> = sigma.as_ref().map(|s| s.sigma().as_slice().to_vec());
    let mut alpha = config.alpha.unwrap_or(1.0);
    let (mut warm_ce, mut warm_mse) = (0.0, 0.0);
    let mut history = Vec::with_capacity(config.epochs);
    let mut last_good = net.params().to_vec();
    for step in 0..config.epochs {
        let batch = draw_batch(&minibatch(&z, config.batch, rng)?, &grid, sigma.as_ref(), rng)?;
        let loss = MixtureLoss {
            alpha,
            mse_weight: 1.0,
            precond: precond.as_deref(),
        };
        let g = net.grad_params_of_input_grad(&loss, &batch.as_mixture())?;
        let total = alpha * g.ce + g.mse;
        if !total.is_finite() || g.grads.iter().any(|v| !v.is_finite()) {
            let mut good = net.clone();
            good.params_mut().copy_from_slice(&last_good);
            return Err(Error::Training {
                step,
                msg: format!("loss {total} (ce {}, mse {})", g.ce, g.mse),
                last_good: Some(Box::new(good)),
            });
        }
        history.push(LossRecord {
            step,
            alpha,
            parts: LossParts {
                total,
                ce: g.ce,
                mse: g.mse,
            },
        });
        last_good.copy_from_slice(net.params());
        adam.lr = config.lr_at(step);
        adam.step(net.params_mut(), &g.grads);
        if config.alpha.is_none() && step < config.warmup {
            warm_ce += g.ce;
            warm_mse += g.mse;
            if step + 1 == config.warmup && warm_ce > 0.0 {
                alpha = warm_mse / warm_ce;
                log::info!("cross-entropy weight settled at {alpha:.4e}");
            }
        }
    }
    let mut model = CdcModel::new(net, grid, sigma, alpha)?;
    model.history = history;
    Ok(model)
}
