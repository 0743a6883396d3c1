//! Train a desk-sized classification-diffusion copula on Gaussian copula
//! data, then compare its density to the truth and sample from it.

use std::time::Instant;

use diffcop::cdc::{cdc_log_density, cdc_sample, train_cdc, CdcModel};
use diffcop::metrics::{kendall_tau, rank_histogram};
use diffcop::neural::Checkpoint;
use diffcop::oracles::GaussianCopula;
use diffcop::processes::CorrelationMatrix;
use diffcop::{CopulaMatrix, RngStream, Scale, TrainConfig};

fn main() -> diffcop::Result<()> {
    let rho = 0.8;
    let truth = GaussianCopula::new(CorrelationMatrix::bivariate(rho)?);
    let data = truth.sample(4000, &mut RngStream::new(7, 0))?;

    let mut cfg = TrainConfig::cdc().desk();
    cfg.k = 20;
    cfg.cosine_decay = true;
    let start = Instant::now();
    let model = train_cdc(&data, &cfg, &mut RngStream::new(7, 1))?;
    let last = model.history.last().expect("at least one step");
    println!(
        "trained {} steps in {:.1}s, alpha {:.3}, final ce {:.4} mse {:.4}",
        cfg.epochs,
        start.elapsed().as_secs_f64(),
        model.alpha,
        last.parts.ce,
        last.parts.mse
    );

    let mut grid = Vec::new();
    for i in 0..20 {
        for j in 0..20 {
            grid.extend([(i as f64 + 0.5) / 20.0, (j as f64 + 0.5) / 20.0]);
        }
    }
    let grid = CopulaMatrix::new(grid, 400, 2, Scale::Copula)?;
    let est = cdc_log_density(&model, &grid)?;
    let err = grid
        .rows()
        .zip(&est)
        .map(|(u, l)| (l - truth.logpdf(u).unwrap()).abs())
        .sum::<f64>()
        / 400.0;
    println!("mean |log c_hat - log c| on a 20x20 grid: {err:.4}");

    // Round-trip through the binary checkpoint format.
    let back = CdcModel::from_checkpoint(&Checkpoint::from_bytes(&model.to_checkpoint().to_bytes())?)?;
    let s = cdc_sample(&back, 5000, &mut RngStream::new(7, 2))?;
    let tau = kendall_tau(&s.column(0), &s.column(1));
    println!(
        "sample tau {tau:.4} (target {:.4})",
        2.0 / std::f64::consts::PI * f64::asin(rho)
    );
    println!(
        "rank histogram {:?}",
        rank_histogram(&s, 10)
            .iter()
            .map(|h| format!("{h:.3}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
