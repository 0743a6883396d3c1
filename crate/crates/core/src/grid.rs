//! Diffusion-time discretisations.

use crate::error::{Error, Result};

/// Default exponent of the power-law grid.
pub const DEFAULT_POWER_EXPONENT: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridScheme {
    /// Equal steps in the KL decay `1 - e^{-2t}`.
    Kl,
    Linear,
    /// `t_s = T (s / (k - 1))^exponent`.
    PowerLaw {
        exponent: f64,
    },
}

impl GridScheme {
    pub fn name(&self) -> &'static str {
        match self {
            GridScheme::Kl => "kl",
            GridScheme::Linear => "linear",
            GridScheme::PowerLaw { .. } => "power",
        }
    }
}

/// Strictly increasing times `0 = T_1 < ... < T_k = terminal`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    scheme: GridScheme,
}

impl TimeGrid {
    pub fn new(scheme: GridScheme, k: usize, terminal: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::config(format!("time grid needs k >= 2, got {k}")));
        }
        if !(terminal > 0.0) || !terminal.is_finite() {
            return Err(Error::config(format!("terminal time must be > 0, got {terminal}")));
        }
        let last = (k - 1) as f64;
        let mut times: Vec<f64> = (0..k)
            .map(|s| {
                let frac = s as f64 / last;
                match scheme {
                    GridScheme::Kl => -0.5 * (1.0 - (-(-2.0 * terminal).exp_m1()) * frac).ln(),
                    GridScheme::Linear => terminal * frac,
                    GridScheme::PowerLaw { exponent } => terminal * frac.powf(exponent),
                }
            })
            .collect();
        if let GridScheme::PowerLaw { exponent } = scheme {
            if !(exponent > 0.0) || !exponent.is_finite() {
                return Err(Error::config(format!("power-law exponent must be > 0, got {exponent}")));
            }
        }
        times[0] = 0.0;
        times[k - 1] = terminal;
        Self::from_times(times, scheme)
    }

    /// Wrap explicit times, checking the grid invariants.
    pub fn from_times(times: Vec<f64>, scheme: GridScheme) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::config("time grid needs at least two points"));
        }
        if times[0] != 0.0 {
            return Err(Error::config("time grid must start at 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
            return Err(Error::config("time grid must be strictly increasing and finite"));
        }
        Ok(Self { times, scheme })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn k(&self) -> usize {
        self.times.len()
    }

    pub fn terminal(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }
}

pub fn make_time_grid(scheme: GridScheme, k: usize, terminal: f64) -> Result<TimeGrid> {
    TimeGrid::new(scheme, k, terminal)
}
