//! Evaluation metrics on small hand-made samples.

use diffcop::metrics::{kendall_tau, kendall_tau_frobenius, ks_uniform, rank_histogram, wasserstein2};
use diffcop::{CopulaMatrix, RngStream, Scale};

fn main() -> diffcop::Result<()> {
    let n = 200;
    let line: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let como = CopulaMatrix::new(line.iter().flat_map(|&x| [x, x]).collect(), n, 2, Scale::Copula)?;
    let anti = CopulaMatrix::new(line.iter().flat_map(|&x| [x, 1.0 - x]).collect(), n, 2, Scale::Copula)?;
    println!(
        "tau comonotone {}, antimonotone {}",
        kendall_tau(&como.column(0), &como.column(1)),
        kendall_tau(&anti.column(0), &anti.column(1))
    );
    println!(
        "Kendall Frobenius distance {:.6} (2*sqrt(2) = {:.6})",
        kendall_tau_frobenius(&como, &anti)?,
        2.0 * 2f64.sqrt()
    );
    println!("W2 comonotone vs antimonotone {:.4}", wasserstein2(&como, &anti)?);

    let mut rng = RngStream::new(5, 0);
    let a = CopulaMatrix::new((0..2 * n).map(|_| rng.uniform()).collect(), n, 2, Scale::Copula)?;
    let b = CopulaMatrix::new((0..2 * n).map(|_| rng.uniform()).collect(), n, 2, Scale::Copula)?;
    println!("W2 between two uniform samples {:.4}", wasserstein2(&a, &b)?);
    println!("KS of a uniform column {:.4}", ks_uniform(&a.column(0)));
    println!("rank histogram {:?}", rank_histogram(&a, 5));
    Ok(())
}
