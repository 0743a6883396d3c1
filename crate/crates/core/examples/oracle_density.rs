//! With exact Gaussian-diffusion class probabilities, the class-probability
//! ratio is the Gaussian copula density and its gradient the copula score.

use diffcop::cdc::{density_with, score_with, AnalyticGaussianProbs};
use diffcop::oracles::GaussianCopula;
use diffcop::processes::CorrelationMatrix;
use diffcop::{make_time_grid, CopulaMatrix, GridScheme, Scale};

fn main() -> diffcop::Result<()> {
    let grid = make_time_grid(GridScheme::Kl, 10, 3.0)?;
    let points = CopulaMatrix::from_rows(&[vec![0.5, 0.5], vec![0.1, 0.2], vec![0.9, 0.3]], Scale::Copula)?;
    for rho in [-0.5, 0.0, 0.5, 0.9] {
        let sigma0 = CorrelationMatrix::bivariate(rho)?;
        let truth = GaussianCopula::new(sigma0.clone());
        let probs = AnalyticGaussianProbs::new(&sigma0, &grid, None)?;
        let c = density_with(&probs, None, &points)?;
        let s = score_with(&probs, None, &points, 0)?;
        println!("rho = {rho}");
        for (i, row) in points.rows().enumerate() {
            println!(
                "  u = {row:?}: ratio {:.6}  closed form {:.6}  score ({:.4}, {:.4})  exact ({:.4}, {:.4})",
                c[i],
                truth.pdf(row)?,
                s.get(i, 0),
                s.get(i, 1),
                truth.score(row)?[0],
                truth.score(row)?[1],
            );
        }
    }

    // Correlated terminal law: the class probabilities change but the
    // recovered density does not.
    let sigma0 = CorrelationMatrix::bivariate(0.7)?;
    let terminal = CorrelationMatrix::bivariate(0.4)?;
    let probs = AnalyticGaussianProbs::new(&sigma0, &grid, Some(&terminal))?;
    let c = density_with(&probs, Some(&terminal), &points)?;
    let truth = GaussianCopula::new(sigma0);
    println!("correlated variant, rho = 0.7:");
    for (i, row) in points.rows().enumerate() {
        println!("  u = {row:?}: {:.6} vs {:.6}", c[i], truth.pdf(row)?);
    }
    Ok(())
}
