//! Both forward processes keep every marginal uniform while forgetting
//! dependence. Prints KS statistics and W2-to-uniform against time.

use diffcop::metrics::{forward_w2_curve, ks_critical, ks_uniform, ForwardProcess};
use diffcop::oracles::GaussianCopula;
use diffcop::processes::{ou_forward, reflection_forward, CorrelationMatrix};
use diffcop::RngStream;

fn main() -> diffcop::Result<()> {
    let mut rng = RngStream::new(1, 0);
    let copula = GaussianCopula::new(CorrelationMatrix::equicorrelated(3, 0.9)?);
    let u = copula.sample(20_000, &mut rng)?;
    let z = u.to_gaussian_scale()?;
    let crit = ks_critical(u.n(), 1e-3);
    println!("KS critical value at 1e-3: {crit:.4}");
    for t in [0.1, 0.5, 1.0, 3.0] {
        let ou = ou_forward(&z, t, None, &mut rng)?.to_copula_scale()?;
        let v = rng.normals(u.n() * u.d());
        let refl = reflection_forward(&u, &v, t)?.positions;
        let worst = |m: &diffcop::CopulaMatrix| (0..m.d()).map(|j| ks_uniform(&m.column(j))).fold(0.0, f64::max);
        println!(
            "t = {t:>4}: max KS  ou {:.4}  reflection {:.4}",
            worst(&ou),
            worst(&refl)
        );
    }

    let times = [0.0, 0.25, 0.5, 1.0, 2.0];
    for (name, process) in [
        ("ou", ForwardProcess::Ou { sigma: None }),
        ("reflection", ForwardProcess::Reflection),
    ] {
        println!("{name}:");
        for p in forward_w2_curve(&u, process, &times, 500, &mut rng)? {
            println!("  t = {:<4} W2 {:.4}  baseline {:.4}", p.t, p.w2, p.baseline);
        }
    }
    Ok(())
}
