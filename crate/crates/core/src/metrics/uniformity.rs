//! Marginal uniformity checks: KS statistic and aggregate rank histograms.

use crate::data::CopulaMatrix;

/// Kolmogorov–Smirnov distance between the empirical CDF of `xs` and U(0,1).
pub fn ks_uniform(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Heights `bins / (N d) * count_k` of the histogram of all entries.
/// Uniform samples give heights near one; the heights always average one.
pub fn rank_histogram(samples: &CopulaMatrix, bins: usize) -> Vec<f64> {
    let bins = bins.max(1);
    let mut counts = vec![0u64; bins];
    for &u in samples.values() {
        let b = ((u * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    let scale = bins as f64 / samples.values().len() as f64;
    counts.iter().map(|&c| c as f64 * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scale;
    use crate::rng::RngStream;

    #[test]
    fn ks_examples() {
        let n = 99;
        let grid: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        assert!((ks_uniform(&grid) - 1.0 / (n + 1) as f64).abs() < 1e-12);
        assert_eq!(ks_uniform(&[0.5; 10]), 0.5);
        assert!((ks_critical(1000, 1e-3) * 1000f64.sqrt() - 1.9495).abs() < 1e-3);
    }

    #[test]
    fn ks_null_rejection_rate() {
        let mut passes = 0;
        for seed in 0..100 {
            let mut rng = RngStream::new(seed, 4);
            let u: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
            if ks_uniform(&u) < 1.95 / 1000f64.sqrt() {
                passes += 1;
            }
        }
        assert!(passes >= 99);
    }

    #[test]
    fn histogram_examples() {
        let low = CopulaMatrix::new(vec![0.05; 20], 10, 2, Scale::Copula).unwrap();
        let mut want = vec![0.0; 10];
        want[0] = 10.0;
        assert_eq!(rank_histogram(&low, 10), want);

        let m = 7;
        let grid: Vec<f64> = (0..10 * m).map(|i| (i as f64 + 0.5) / (10 * m) as f64).collect();
        let g = CopulaMatrix::new(grid, 10 * m, 1, Scale::Copula).unwrap();
        assert!(rank_histogram(&g, 10).iter().all(|&h| (h - 1.0).abs() < 1e-12));

        let mut rng = RngStream::new(9, 0);
        let u = CopulaMatrix::new((0..100_000).map(|_| rng.uniform()).collect(), 100_000, 1, Scale::Copula).unwrap();
        let h = rank_histogram(&u, 10);
        assert!(h.iter().all(|&v| (v - 1.0).abs() <= 0.05));
        assert!((h.iter().sum::<f64>() / 10.0 - 1.0).abs() < 1e-12);
    }
}
