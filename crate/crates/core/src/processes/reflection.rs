//! Reflected free motion on the unit hypercube.

use crate::data::{CopulaMatrix, Scale};
use crate::error::{Error, Result};

/// The 2-periodic fold of the real line onto [0, 1]. Positions crossing a
/// wall come back mirrored and their velocity flips sign.
#[inline]
pub fn reflect(x: f64, y: f64) -> (f64, f64) {
    let f = x.floor();
    let r = x - f;
    if (f * 0.5).floor() * 2.0 == f {
        (r.clamp(0.0, 1.0), y)
    } else {
        ((1.0 - r).clamp(0.0, 1.0), -y)
    }
}

/// Position branch of [`reflect`].
#[inline]
pub fn reflect_position(x: f64) -> f64 {
    reflect(x, 0.0).0
}

/// Checked [`reflect`].
pub fn reflect_1d(x: f64, y: f64) -> Result<(f64, f64)> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::domain(format!("reflect_1d needs finite input, got ({x}, {y})")));
    }
    Ok(reflect(x, y))
}

/// Sample-velocity pairs at a common time.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityState {
    pub positions: CopulaMatrix,
    pub velocities: Vec<f64>,
    pub time: f64,
}

/// `(u_t, v_t) = R(u_0 + t v_0, v_0)` coordinate-wise.
pub fn reflection_forward(u0: &CopulaMatrix, v0: &[f64], t: f64) -> Result<VelocityState> {
    if u0.scale() != Scale::Copula {
        return Err(Error::domain("reflection process starts on the copula scale"));
    }
    if v0.len() != u0.values().len() {
        return Err(Error::size(format!(
            "{} velocities for {} positions",
            v0.len(),
            u0.values().len()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!(
            "reflection time must be finite and >= 0, got {t}"
        )));
    }
    if v0.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite velocity"));
    }
    let mut pos = Vec::with_capacity(v0.len());
    let mut vel = Vec::with_capacity(v0.len());
    for (&u, &v) in u0.values().iter().zip(v0) {
        let (p, w) = reflect(u + t * v, v);
        pos.push(p);
        vel.push(w);
    }
    // Positions live in the closed cube; a wall hit lands exactly on 0 or 1.
    Ok(VelocityState {
        positions: closed_cube(pos, u0.n(), u0.d())?,
        velocities: vel,
        time: t,
    })
}

fn closed_cube(values: Vec<f64>, n: usize, d: usize) -> Result<CopulaMatrix> {
    let nudged = values
        .into_iter()
        .map(|p| p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
        .collect();
    CopulaMatrix::new(nudged, n, d, Scale::Copula)
}
