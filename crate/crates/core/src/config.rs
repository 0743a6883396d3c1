//! Hyperparameters shared by both trainable copula models.

use crate::error::{Error, Result};
use crate::grid::{GridScheme, DEFAULT_POWER_EXPONENT};

/// Whether the diffusion uses independent or correlated noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    Identity,
    /// Correlation of the training data on the Gaussian scale.
    Empirical,
}

impl SigmaMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" | "independent" => Ok(SigmaMode::Identity),
            "empirical" | "correlated" => Ok(SigmaMode::Empirical),
            other => Err(Error::config(format!("unknown sigma mode '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SigmaMode::Identity => "identity",
            SigmaMode::Empirical => "empirical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Cross-entropy weight; `None` balances it against the score term
    /// after `warmup` steps.
    pub alpha: Option<f64>,
    pub warmup: usize,
    /// Number of gradient steps, one minibatch each.
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Cosine-anneal the learning rate to zero over the run.
    pub cosine_decay: bool,
    pub hidden: Vec<usize>,
    /// Number of diffusion classes.
    pub k: usize,
    pub terminal: f64,
    pub scheme: GridScheme,
    pub sigma_mode: SigmaMode,
    /// Reflection training times are `terminal * u^time_power`.
    pub time_power: f64,
    /// Reflection sampling grid exponent.
    pub grid_exponent: f64,
    /// Reflection sampling steps.
    pub steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Science-scale classification-diffusion defaults.
    pub fn cdc() -> Self {
        Self {
            alpha: None,
            warmup: 50,
            epochs: 1000,
            batch: 1024,
            lr: 5e-5,
            cosine_decay: false,
            hidden: vec![512; 6],
            k: 50,
            terminal: 3.0,
            scheme: GridScheme::Kl,
            sigma_mode: SigmaMode::Identity,
            time_power: 4.0,
            grid_exponent: DEFAULT_POWER_EXPONENT,
            steps: 50,
            seed: 0,
        }
    }

    /// Science-scale reflection defaults.
    pub fn reflection() -> Self {
        Self {
            epochs: 100_000,
            batch: 512,
            lr: 1e-4,
            terminal: 1.5,
            ..Self::cdc()
        }
    }

    /// Small networks and short schedules for laptops and CI.
    pub fn desk(mut self) -> Self {
        self.hidden = vec![64, 64];
        self.epochs = self.epochs.min(2000);
        self.batch = self.batch.min(256);
        self.lr = 1e-3;
        self
    }

    /// Learning rate at a zero-based step.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.cosine_decay {
            let frac = step as f64 / self.epochs as f64;
            0.5 * self.lr * (1.0 + (std::f64::consts::PI * frac).cos())
        } else {
            self.lr
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::config("epochs and batch must be positive"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::config(format!("alpha must be finite and >= 0, got {a}")));
            }
        }
        if self.k < 2 {
            return Err(Error::config("need at least two diffusion classes"));
        }
        if !(self.terminal > 0.0) || !self.terminal.is_finite() {
            return Err(Error::config(format!(
                "terminal time must be positive, got {}",
                self.terminal
            )));
        }
        if !(self.time_power > 0.0) || !(self.grid_exponent > 0.0) {
            return Err(Error::config("time power and grid exponent must be positive"));
        }
        if self.steps < 2 {
            return Err(Error::config("need at least two sampling steps"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::cdc()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset_shrinks() {
        let c = TrainConfig::cdc().desk();
        assert_eq!(c.hidden, vec![64, 64]);
        assert!(c.epochs <= 2000);
        assert!(c.validate().is_ok());
        assert_eq!(TrainConfig::reflection().terminal, 1.5);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = TrainConfig::cdc();
        c.k = 1;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::cdc();
        c.lr = f64::NAN;
        assert!(c.validate().is_err());
        assert!(SigmaMode::parse("bogus").is_err());
        assert_eq!(SigmaMode::parse("Empirical").unwrap(), SigmaMode::Empirical);
    }
}
