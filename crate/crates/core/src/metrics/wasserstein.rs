//! Exact empirical Wasserstein-2 distance: an assignment solver for equal
//! sizes, min-cost flow otherwise.

use crate::data::CopulaMatrix;
use crate::error::{Error, Result};

/// Largest sample set accepted by the exact solver.
pub const W2_MAX_POINTS: usize = 4096;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact W2 between the empirical measures of the rows of `a` and `b`.
pub fn wasserstein2(a: &CopulaMatrix, b: &CopulaMatrix) -> Result<f64> {
    if a.d() != b.d() {
        return Err(Error::size(format!("dimension mismatch {} vs {}", a.d(), b.d())));
    }
    if a.n() > W2_MAX_POINTS || b.n() > W2_MAX_POINTS {
        return Err(Error::size(format!(
            "exact W2 supports at most {W2_MAX_POINTS} points per set (got {} and {}); subsample first",
            a.n(),
            b.n()
        )));
    }
    let (na, nb) = (a.n(), b.n());
    let cost: Vec<f64> = a
        .rows()
        .flat_map(|ra| b.rows().map(move |rb| sq_dist(ra, rb)))
        .collect();
    if na == nb {
        let assign = assignment(&cost, na);
        let acc: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i * nb + j]).sum();
        return Ok((acc / na as f64).max(0.0).sqrt());
    }
    Ok(transport_cost(&cost, na, nb).max(0.0).sqrt())
}

/// Mean cost of the optimal uniform-weight transport plan.
fn transport_cost(cost: &[f64], na: usize, nb: usize) -> f64 {
    let g = gcd(na, nb);
    let supply = nb / g;
    let demand = na / g;
    let total = (na * nb / g) as f64;
    let flow = transport(cost, na, nb, supply as u64, demand as u64);
    let mut acc = 0.0;
    for (f, c) in flow.iter().zip(cost) {
        if *f > 0 {
            acc += *f as f64 * c;
        }
    }
    acc / total
}

/// Optimal assignment of rows to columns of a square cost matrix by
/// shortest augmenting paths with row and column potentials. Returns the
/// column assigned to each row.
fn assignment(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based internally; column 0 is the virtual source
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[owner[j] - 1] = j - 1;
    }
    out
}

/// Successive shortest paths with Johnson potentials on the complete
/// bipartite graph. Every row has `supply` units, every column `demand`.
/// Returns the row-major integer flow matrix.
fn transport(cost: &[f64], na: usize, nb: usize, supply: u64, demand: u64) -> Vec<u64> {
    let mut flow = vec![0u64; na * nb];
    let mut left = vec![supply; na];
    let mut need = vec![demand; nb];
    // node potentials; rows first, then columns
    let mut pa = vec![0.0f64; na];
    let mut pb = vec![0.0f64; nb];
    let mut remaining = supply * na as u64;
    let mut da = vec![0.0f64; na];
    let mut db = vec![0.0f64; nb];
    let mut done_a = vec![false; na];
    let mut done_b = vec![false; nb];
    let mut prev_b = vec![usize::MAX; nb]; // row feeding column j
    let mut prev_a = vec![usize::MAX; na]; // column feeding row i via a reverse edge
                                           // reduced cost of a->b is c - pb + pa, always >= 0 up to rounding
    while remaining > 0 {
        da.iter_mut()
            .zip(&left)
            .for_each(|(d, &l)| *d = if l > 0 { 0.0 } else { f64::INFINITY });
        db.fill(f64::INFINITY);
        done_a.fill(false);
        done_b.fill(false);
        prev_a.fill(usize::MAX);
        let target;
        loop {
            // pick the closest unsettled node
            let mut best = f64::INFINITY;
            let mut pick: Option<(bool, usize)> = None;
            for i in 0..na {
                if !done_a[i] && da[i] < best {
                    best = da[i];
                    pick = Some((true, i));
                }
            }
            for j in 0..nb {
                if !done_b[j] && db[j] < best {
                    best = db[j];
                    pick = Some((false, j));
                }
            }
            let (is_a, idx) = pick.expect("transport graph is connected");
            if is_a {
                done_a[idx] = true;
                let row = &cost[idx * nb..(idx + 1) * nb];
                for j in 0..nb {
                    if done_b[j] {
                        continue;
                    }
                    let rc = (row[j] + pa[idx] - pb[j]).max(0.0);
                    let nd = best + rc;
                    if nd < db[j] {
                        db[j] = nd;
                        prev_b[j] = idx;
                    }
                }
            } else {
                done_b[idx] = true;
                if need[idx] > 0 {
                    target = idx;
                    break;
                }
                for i in 0..na {
                    if done_a[i] || flow[i * nb + idx] == 0 {
                        continue;
                    }
                    let rc = (pb[idx] - cost[i * nb + idx] - pa[i]).max(0.0);
                    let nd = best + rc;
                    if nd < da[i] {
                        da[i] = nd;
                        prev_a[i] = idx;
                    }
                }
            }
        }
        let dt = db[target];
        for i in 0..na {
            pa[i] += da[i].min(dt);
        }
        for j in 0..nb {
            pb[j] += db[j].min(dt);
        }
        // walk back to find the bottleneck
        let mut amount = need[target];
        let mut j = target;
        loop {
            let i = prev_b[j];
            if prev_a[i] == usize::MAX {
                amount = amount.min(left[i]);
                break;
            }
            let jj = prev_a[i];
            amount = amount.min(flow[i * nb + jj]);
            j = jj;
        }
        let mut j = target;
        need[target] -= amount;
        loop {
            let i = prev_b[j];
            flow[i * nb + j] += amount;
            if prev_a[i] == usize::MAX {
                left[i] -= amount;
                break;
            }
            let jj = prev_a[i];
            flow[i * nb + jj] -= amount;
            j = jj;
        }
        remaining -= amount;
    }
    flow
}
