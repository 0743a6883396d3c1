//! Run configuration: defaults, then a flat `key = value` file, then `CF_*`
//! environment variables, then command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{SigmaMode, TrainConfig};
use crate::error::{Error, Result};
use crate::grid::GridScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Sample,
    Density,
    Diagnose,
    Simstudy,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Sample => "sample",
            Command::Density => "density",
            Command::Diagnose => "diagnose",
            Command::Simstudy => "simstudy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cdc,
    Reflection,
    Gaussian,
    MixtureTOracle,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cdc" => Ok(ModelKind::Cdc),
            "reflection" => Ok(ModelKind::Reflection),
            "gaussian" => Ok(ModelKind::Gaussian),
            "mixture_t_oracle" | "mixture_t" => Ok(ModelKind::MixtureTOracle),
            other => Err(Error::config(format!("unknown model '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Cdc => "cdc",
            ModelKind::Reflection => "reflection",
            ModelKind::Gaussian => "gaussian",
            ModelKind::MixtureTOracle => "mixture_t_oracle",
        }
    }
}

/// Every key accepted in config files, `CF_<KEY>` variables and `--key` flags.
pub const KEYS: &[&str] = &[
    "input",
    "output",
    "checkpoint",
    "reference",
    "densities",
    "marginals",
    "data_output",
    "logpdf_output",
    "loss",
    "model",
    "desk",
    "alpha",
    "warmup",
    "epochs",
    "batch",
    "lr",
    "cosine",
    "hidden",
    "k",
    "terminal",
    "scheme",
    "grid_exponent",
    "time_power",
    "steps",
    "sigma_mode",
    "seed",
    "runs",
    "parallel",
    "header",
    "pseudo",
    "n",
    "d",
    "n_train",
    "n_test",
    "bins",
    "times",
    "n_ref",
];

fn normalise_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = normalise_key(k);
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::config(format!("line {}: unknown key '{key}'", lineno + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// `CF_*` variables that name a known key; others are skipped with a warning.
pub fn env_pairs(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (name, value) in vars {
        let Some(rest) = name.strip_prefix("CF_") else { continue };
        let key = normalise_key(rest);
        if KEYS.contains(&key.as_str()) {
            out.push((key, value));
        } else {
            log::warn!("ignoring {name}: not a config key");
        }
    }
    out.sort();
    out
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse '{v}'")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn list<T: FromStr>(key: &str, v: &str, seps: &[char]) -> Result<Vec<T>> {
    v.split(|c| seps.contains(&c))
        .filter(|s| !s.trim().is_empty())
        .map(|s| num(key, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub desk: bool,
    pub seed: Option<u64>,
    /// Repetitions for mean/std reporting; run `r` uses RNG stream `r`.
    pub runs: usize,
    pub parallel: bool,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub densities: Option<PathBuf>,
    /// Data-scale sample whose empirical quantiles map samples to data scale.
    pub marginals: Option<PathBuf>,
    pub data_output: Option<PathBuf>,
    pub logpdf_output: Option<PathBuf>,
    pub loss: Option<PathBuf>,
    /// Input CSVs carry a header row.
    pub header: bool,
    /// Rank-transform data-scale input into pseudo-observations.
    pub pseudo: bool,
    pub n: usize,
    pub d: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub bins: usize,
    /// Forward W2 curve times.
    pub times: Vec<f64>,
    /// Rows used per W2 evaluation.
    pub n_ref: usize,
    /// Keys given explicitly by any source, in order of first appearance.
    pub explicit: Vec<String>,
}

impl RunConfig {
    /// Defaults for a command and model before any overrides.
    pub fn defaults(command: Command, model: ModelKind, desk: bool) -> Self {
        let mut train = match model {
            ModelKind::Reflection => TrainConfig::reflection(),
            _ => TrainConfig::cdc(),
        };
        if command == Command::Simstudy {
            train.k = 8;
        }
        if desk {
            train = train.desk();
        }
        Self {
            command,
            model,
            train,
            desk,
            seed: None,
            runs: 1,
            parallel: false,
            input: None,
            output: None,
            checkpoint: None,
            reference: None,
            densities: None,
            marginals: None,
            data_output: None,
            logpdf_output: None,
            loss: None,
            header: false,
            pseudo: false,
            n: 1000,
            d: 10,
            n_train: 8000,
            n_test: 2000,
            bins: 10,
            times: vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            n_ref: 1000,
            explicit: Vec::new(),
        }
    }

    /// Apply ordered overrides on top of the defaults. `model` and `desk`
    /// pick the defaults, so their last occurrence wins before anything else
    /// is applied.
    pub fn from_pairs(command: Command, pairs: &[(String, String)]) -> Result<Self> {
        let mut model = ModelKind::Cdc;
        let mut desk = false;
        for (k, v) in pairs {
            match k.as_str() {
                "model" => model = ModelKind::parse(v)?,
                "desk" => desk = boolean(k, v)?,
                _ => {}
            }
        }
        let mut cfg = Self::defaults(command, model, desk);
        let mut scheme = None;
        for (k, v) in pairs {
            cfg.set(k, v, &mut scheme)?;
            if !cfg.explicit.contains(k) {
                cfg.explicit.push(k.clone());
            }
        }
        cfg.train.scheme = match scheme.as_deref() {
            None => cfg.train.scheme,
            Some("kl") => GridScheme::Kl,
            Some("linear") => GridScheme::Linear,
            Some("power") => GridScheme::PowerLaw {
                exponent: cfg.train.grid_exponent,
            },
            Some(other) => return Err(Error::config(format!("unknown grid scheme '{other}'"))),
        };
        cfg.train.seed = cfg.seed.unwrap_or(0);
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, scheme: &mut Option<String>) -> Result<()> {
        let path = || Some(PathBuf::from(v.trim()));
        let t = &mut self.train;
        match key {
            "input" => self.input = path(),
            "output" => self.output = path(),
            "checkpoint" => self.checkpoint = path(),
            "reference" => self.reference = path(),
            "densities" => self.densities = path(),
            "marginals" => self.marginals = path(),
            "data_output" => self.data_output = path(),
            "logpdf_output" => self.logpdf_output = path(),
            "loss" => self.loss = path(),
            "model" | "desk" => {}
            "alpha" => t.alpha = if v.trim() == "auto" { None } else { Some(num(key, v)?) },
            "warmup" => t.warmup = num(key, v)?,
            "epochs" => t.epochs = num(key, v)?,
            "batch" => t.batch = num(key, v)?,
            "lr" => t.lr = num(key, v)?,
            "cosine" => t.cosine_decay = boolean(key, v)?,
            "hidden" => t.hidden = list(key, v, &[',', 'x'])?,
            "k" => t.k = num(key, v)?,
            "terminal" => t.terminal = num(key, v)?,
            "scheme" => *scheme = Some(v.trim().to_ascii_lowercase()),
            "grid_exponent" => t.grid_exponent = num(key, v)?,
            "time_power" => t.time_power = num(key, v)?,
            "steps" => t.steps = num(key, v)?,
            "sigma_mode" => t.sigma_mode = SigmaMode::parse(v.trim())?,
            "seed" => self.seed = Some(num(key, v)?),
            "runs" => self.runs = num(key, v)?,
            "parallel" => self.parallel = boolean(key, v)?,
            "header" => self.header = boolean(key, v)?,
            "pseudo" => self.pseudo = boolean(key, v)?,
            "n" => self.n = num(key, v)?,
            "d" => self.d = num(key, v)?,
            "n_train" => self.n_train = num(key, v)?,
            "n_test" => self.n_test = num(key, v)?,
            "bins" => self.bins = num(key, v)?,
            "times" => self.times = list(key, v, &[','])?,
            "n_ref" => self.n_ref = num(key, v)?,
            other => return Err(Error::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Check required settings and that every referenced path resolves.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.runs == 0 || self.n == 0 || self.d == 0 || self.bins == 0 || self.n_ref == 0 {
            return Err(Error::config("runs, n, d, bins and n_ref must be positive"));
        }
        if matches!(self.command, Command::Train | Command::Sample) && self.seed.is_none() {
            return Err(Error::config(format!("{} requires a seed", self.command.name())));
        }
        let needs_input = match self.command {
            Command::Train => self.model != ModelKind::MixtureTOracle,
            Command::Density | Command::Diagnose => true,
            _ => false,
        };
        if needs_input {
            existing("input", self.input.as_deref())?;
        }
        if matches!(self.command, Command::Sample | Command::Density) {
            existing("checkpoint", self.checkpoint.as_deref())?;
        }
        if self.command == Command::Diagnose {
            existing("reference", self.reference.as_deref())?;
            if let Some(p) = &self.densities {
                existing("densities", Some(p))?;
            }
        }
        if let Some(p) = &self.marginals {
            existing("marginals", Some(p))?;
        }
        if self.data_output.is_some() && self.marginals.is_none() {
            return Err(Error::config("data_output needs marginals"));
        }
        if self.command == Command::Simstudy && (self.n_train == 0 || self.n_test == 0) {
            return Err(Error::config("n_train and n_test must be positive"));
        }
        let out = self
            .output
            .as_deref()
            .ok_or_else(|| Error::config("output is required"))?;
        for p in [
            Some(out),
            self.data_output.as_deref(),
            self.logpdf_output.as_deref(),
            self.loss.as_deref(),
        ]
        .into_iter()
        .flatten()
        {
            writable(p)?;
        }
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.iter().any(|k| k == key)
    }

    pub fn output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::config("output is required"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::config("seed is required"))
    }
}

fn existing(key: &str, p: Option<&Path>) -> Result<()> {
    match p {
        None => Err(Error::config(format!("{key} is required"))),
        Some(p) if !p.exists() => Err(Error::config(format!("{key} {} does not exist", p.display()))),
        Some(_) => Ok(()),
    }
}

fn writable(p: &Path) -> Result<()> {
    match p.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(Error::config(format!("directory {} does not exist", dir.display())))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn later_sources_win_and_desk_applies_first() {
        let p = pairs(&[("epochs", "10"), ("desk", "true"), ("epochs", "30"), ("hidden", "16x8")]);
        let c = RunConfig::from_pairs(Command::Train, &p).unwrap();
        assert_eq!(c.train.epochs, 30);
        assert_eq!(c.train.hidden, vec![16, 8]);
        assert_eq!(c.train.lr, 1e-3);
        let c = RunConfig::from_pairs(Command::Train, &pairs(&[("desk", "1")])).unwrap();
        assert_eq!(c.train.epochs, 1000);
        assert_eq!(c.train.hidden, vec![64, 64]);
    }

    #[test]
    fn model_defaults_and_scheme() {
        let c = RunConfig::from_pairs(Command::Train, &pairs(&[("model", "reflection")])).unwrap();
        assert_eq!(c.train.terminal, 1.5);
        let c = RunConfig::from_pairs(Command::Simstudy, &[]).unwrap();
        assert_eq!(c.train.k, 8);
        let c = RunConfig::from_pairs(Command::Train, &pairs(&[("scheme", "power"), ("grid_exponent", "2")])).unwrap();
        assert_eq!(c.train.scheme, GridScheme::PowerLaw { exponent: 2.0 });
        assert_eq!(
            RunConfig::from_pairs(Command::Train, &pairs(&[("alpha", "auto")]))
                .unwrap()
                .train
                .alpha,
            None
        );
    }

    #[test]
    fn file_and_env_parsing() {
        let kv = parse_kv("# comment\nepochs = 5\n\nlr=0.01 # trailing\nGrid-Exponent = 2\n").unwrap();
        assert_eq!(kv, pairs(&[("epochs", "5"), ("lr", "0.01"), ("grid_exponent", "2")]));
        assert!(parse_kv("bogus = 1").is_err());
        assert!(parse_kv("no equals sign").is_err());
        let env = env_pairs(vec![
            ("CF_EPOCHS".to_string(), "7".to_string()),
            ("CF_NOPE".to_string(), "1".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ]);
        assert_eq!(env, pairs(&[("epochs", "7")]));
    }

    #[test]
    fn validation() {
        let c = RunConfig::from_pairs(Command::Train, &pairs(&[("output", "m.ck")])).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig::from_pairs(
            Command::Train,
            &pairs(&[("output", "m.ck"), ("seed", "1"), ("input", "/definitely/missing.csv")]),
        )
        .unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_pairs(
            Command::Train,
            &pairs(&[("output", "m.ck"), ("seed", "1"), ("model", "mixture_t_oracle")]),
        )
        .unwrap();
        assert!(c.validate().is_ok());
        assert!(RunConfig::from_pairs(Command::Train, &pairs(&[("epochs", "x")])).is_err());
        assert!(RunConfig::from_pairs(Command::Train, &pairs(&[("model", "vae")])).is_err());
    }
}
