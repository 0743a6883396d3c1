//! Train the reflection copula's velocity predictor and sample by reflected
//! Euler steps, on the default and on a coarser-near-zero time grid.

use std::time::Instant;

use diffcop::metrics::{kendall_tau, rank_histogram};
use diffcop::oracles::GaussianCopula;
use diffcop::processes::CorrelationMatrix;
use diffcop::reflection::{reflection_sample, train_reflection};
use diffcop::{RngStream, TrainConfig};

fn main() -> diffcop::Result<()> {
    let rho = 0.8;
    let truth = GaussianCopula::new(CorrelationMatrix::bivariate(rho)?);
    let data = truth.sample(4000, &mut RngStream::new(7, 0))?;

    let mut cfg = TrainConfig::reflection().desk();
    cfg.epochs = 4000;
    cfg.cosine_decay = true;
    let start = Instant::now();
    let mut model = train_reflection(&data, &cfg, &mut RngStream::new(7, 1))?;
    println!(
        "trained in {:.1}s, final loss {:.4}",
        start.elapsed().as_secs_f64(),
        model.history.last().unwrap()
    );

    println!("target tau {:.4}", 2.0 / std::f64::consts::PI * f64::asin(rho));
    for exponent in [model.grid_exponent, 2.0] {
        model.grid_exponent = exponent;
        let s = reflection_sample(&model, 5000, &mut RngStream::new(7, 2))?;
        let h: Vec<String> = rank_histogram(&s, 10).iter().map(|h| format!("{h:.2}")).collect();
        println!(
            "grid exponent {exponent}: tau {:.4}, rank histogram {h:?}",
            kendall_tau(&s.column(0), &s.column(1))
        );
    }
    Ok(())
}
