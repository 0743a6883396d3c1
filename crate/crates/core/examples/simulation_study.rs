//! A reduced mixture-t simulation study: train on oracle samples and compare
//! test log densities to the truth.

use diffcop::cli::{simstudy_runs, Command, RunConfig};
use diffcop::metrics::mean_std;

fn main() -> diffcop::Result<()> {
    let mut cfg = RunConfig::defaults(Command::Simstudy, diffcop::cli::ModelKind::Cdc, true);
    cfg.d = 5;
    cfg.runs = 2;
    cfg.n_train = 4000;
    cfg.n_test = 1000;
    cfg.train.epochs = 500;
    cfg.seed = Some(0);
    let runs = simstudy_runs(&cfg)?;
    for (r, run) in runs.iter().enumerate() {
        println!(
            "run {r}: MAE {:.3}  MSE {:.3}  oracle MAE {:.1e}",
            run.mae, run.mse, run.oracle_mae
        );
    }
    let (m, s) = mean_std(&runs.iter().map(|r| r.mae).collect::<Vec<_>>());
    println!("d = {}: MAE {m:.3} ± {s:.3}", cfg.d);
    Ok(())
}
