//! Evaluation metrics and diagnostics.

mod forward;
mod kendall;
mod report;
mod uniformity;
mod wasserstein;

pub use forward::{forward_w2_curve, forward_w2_curve_averaged, ForwardProcess, W2Point};
pub use kendall::{kendall_tau, kendall_tau_frobenius, kendall_tau_matrix, kendall_tau_pairs};
pub use report::{write_reports, MetricReport};
pub use uniformity::{ks_critical, ks_uniform, rank_histogram};
pub use wasserstein::{wasserstein2, W2_MAX_POINTS};

use crate::error::{Error, Result};

/// Mean log density.
pub fn mean_loglik(densities: &[f64]) -> Result<f64> {
    if densities.is_empty() {
        return Err(Error::size("no densities"));
    }
    if let Some(bad) = densities.iter().find(|&&c| !(c > 0.0) || !c.is_finite()) {
        return Err(Error::domain(format!("density {bad} is not positive and finite")));
    }
    Ok(densities.iter().map(|c| c.ln()).sum::<f64>() / densities.len() as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}
