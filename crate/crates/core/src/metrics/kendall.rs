//! Kendall's tau-b and the Frobenius distance between tau matrices.

use nalgebra::DMatrix;

use crate::data::CopulaMatrix;
use crate::error::{Error, Result};

fn tau_from_counts(n0: u64, ties_x: u64, ties_y: u64, net: i64) -> f64 {
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    if denom == 0.0 {
        log::warn!("Kendall tau of a constant column; using 0");
        return 0.0;
    }
    net as f64 / denom
}

/// Pairs tied within each run of equal values.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions.
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        sort_count_swaps(l, bl) + sort_count_swaps(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Tau-b in O(n log n) by Knight's algorithm.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    assert_eq!(n, y.len());
    let n0 = (n as u64) * (n as u64).saturating_sub(1) / 2;
    // +0.0 folds -0.0 into 0.0 so equal values sort together
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a + 0.0, b + 0.0)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_x = tied_pairs(&xs);
    let joint = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let ties_y = tied_pairs(&ys);
    let net = n0 as i64 - ties_x as i64 - ties_y as i64 + joint as i64 - 2 * swaps as i64;
    tau_from_counts(n0, ties_x, ties_y, net)
}

/// Tau-b by direct pair counting, O(n²).
pub fn kendall_tau_pairs(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let n0 = (n as u64) * (n as u64).saturating_sub(1) / 2;
    let (mut net, mut tx, mut ty) = (0i64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            let s = dx * dy;
            if s > 0.0 {
                net += 1;
            } else if s < 0.0 {
                net -= 1;
            }
        }
    }
    tau_from_counts(n0, tx, ty, net)
}

/// Pairwise tau-b matrix of the columns.
pub fn kendall_tau_matrix(m: &CopulaMatrix) -> DMatrix<f64> {
    let d = m.d();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| m.column(j)).collect();
    let mut out = DMatrix::identity(d, d);
    for i in 0..d {
        for j in 0..i {
            let t = kendall_tau(&cols[i], &cols[j]);
            out[(i, j)] = t;
            out[(j, i)] = t;
        }
    }
    out
}

/// `||τ(a) - τ(b)||_F`.
pub fn kendall_tau_frobenius(a: &CopulaMatrix, b: &CopulaMatrix) -> Result<f64> {
    if a.d() != b.d() {
        return Err(Error::size(format!("dimension mismatch {} vs {}", a.d(), b.d())));
    }
    if a.n() < 10 || b.n() < 10 {
        return Err(Error::size("Kendall tau needs at least 10 rows per sample"));
    }
    Ok((kendall_tau_matrix(a) - kendall_tau_matrix(b)).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scale;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    #[test]
    fn comonotone_vs_antimonotone() {
        let co: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64]).collect();
        let anti: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, -(i as f64)]).collect();
        let a = CopulaMatrix::from_rows(&co, Scale::Data).unwrap();
        let b = CopulaMatrix::from_rows(&anti, Scale::Data).unwrap();
        assert_eq!(kendall_tau_frobenius(&a, &a).unwrap(), 0.0);
        assert!((kendall_tau_frobenius(&a, &b).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matches_pair_counting_exactly() {
        let mut rng = RngStream::new(5, 0);
        for _ in 0..50 {
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..3).map(|_| (rng.normal() * 2.0).round()).collect())
                .collect();
            let m = CopulaMatrix::from_rows(&rows, Scale::Data).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let (x, y) = (m.column(i), m.column(j));
                    if i != j {
                        assert_eq!(kendall_tau(&x, &y), kendall_tau_pairs(&x, &y));
                    }
                }
            }
        }
    }

    #[test]
    fn constant_column_gives_zero() {
        assert_eq!(
            kendall_tau(&[1.0; 12], &(0..12).map(f64::from).collect::<Vec<_>>()),
            0.0
        );
    }

    #[test]
    fn too_few_rows() {
        let m = CopulaMatrix::new(vec![0.5; 18], 9, 2, Scale::Copula).unwrap();
        assert!(kendall_tau_frobenius(&m, &m).is_err());
    }

    proptest! {
        #[test]
        fn fast_equals_brute(v in proptest::collection::vec((-3i32..3, -3i32..3), 2..60)) {
            let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            prop_assert_eq!(kendall_tau(&x, &y), kendall_tau_pairs(&x, &y));
        }

        #[test]
        fn frobenius_is_symmetric(seed in 0u64..1000) {
            let mut rng = RngStream::new(seed, 0);
            let a = CopulaMatrix::new((0..36).map(|_| rng.uniform()).collect(), 12, 3, Scale::Copula).unwrap();
            let b = CopulaMatrix::new((0..36).map(|_| rng.uniform()).collect(), 12, 3, Scale::Copula).unwrap();
            prop_assert_eq!(kendall_tau_frobenius(&a, &b).unwrap(), kendall_tau_frobenius(&b, &a).unwrap());
            prop_assert_eq!(kendall_tau_frobenius(&a, &a).unwrap(), 0.0);
        }
    }
}
