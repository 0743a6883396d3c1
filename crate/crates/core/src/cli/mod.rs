//! Command-line driver.
//!
//! Settings resolve in order: built-in defaults (with `--desk` shrinking the
//! network and schedule), a flat `key = value` file given by `--config`,
//! `CF_<KEY>` environment variables, then `--key value` flags. Exit code 0
//! means success, 2 a configuration or input problem, 3 a numeric or
//! training failure.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_density, cmd_diagnose, cmd_sample, cmd_simstudy, cmd_train, simstudy_run, simstudy_runs, LoadedModel, SimRun,
};
pub use config::{env_pairs, parse_kv, Command, ModelKind, RunConfig, KEYS};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "diffcop",
    version,
    about = "Train, sample and evaluate diffusion copula models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Train a model on copula-scale CSV data and write a checkpoint.
    Train(CommonArgs),
    /// Draw samples from a checkpoint.
    Sample(CommonArgs),
    /// Evaluate copula densities at the rows of a CSV.
    Density(CommonArgs),
    /// Uniformity, dependence and forward-process diagnostics.
    Diagnose(CommonArgs),
    /// Mixture-t simulation study of density accuracy.
    Simstudy(CommonArgs),
}

/// Value flags; each mirrors the config-file key of the same name.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Reference data for diagnose.
    #[arg(long)]
    pub reference: Option<String>,
    /// Density table for the mean log-likelihood in diagnose.
    #[arg(long)]
    pub densities: Option<String>,
    /// Data-scale CSV whose empirical quantiles map samples to data scale.
    #[arg(long)]
    pub marginals: Option<String>,
    #[arg(long)]
    pub data_output: Option<String>,
    /// Exact log densities of analytic-model samples.
    #[arg(long)]
    pub logpdf_output: Option<String>,
    /// Loss trajectory CSV (default: <output>.loss.csv).
    #[arg(long)]
    pub loss: Option<String>,
    /// cdc, reflection, gaussian or mixture_t_oracle.
    #[arg(long)]
    pub model: Option<String>,
    /// Cross-entropy weight, or "auto".
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub warmup: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    /// Hidden widths, e.g. 64,64 or 64x64.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub terminal: Option<String>,
    /// kl, linear or power.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub grid_exponent: Option<String>,
    #[arg(long)]
    pub time_power: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    /// identity or empirical.
    #[arg(long)]
    pub sigma_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub runs: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub n_train: Option<String>,
    #[arg(long)]
    pub n_test: Option<String>,
    #[arg(long)]
    pub bins: Option<String>,
    /// Comma-separated forward-curve times.
    #[arg(long)]
    pub times: Option<String>,
    #[arg(long)]
    pub n_ref: Option<String>,
}

impl Overrides {
    pub fn pairs(&self) -> Vec<(String, String)> {
        let fields = [
            ("input", &self.input),
            ("output", &self.output),
            ("checkpoint", &self.checkpoint),
            ("reference", &self.reference),
            ("densities", &self.densities),
            ("marginals", &self.marginals),
            ("data_output", &self.data_output),
            ("logpdf_output", &self.logpdf_output),
            ("loss", &self.loss),
            ("model", &self.model),
            ("alpha", &self.alpha),
            ("warmup", &self.warmup),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("lr", &self.lr),
            ("hidden", &self.hidden),
            ("k", &self.k),
            ("terminal", &self.terminal),
            ("scheme", &self.scheme),
            ("grid_exponent", &self.grid_exponent),
            ("time_power", &self.time_power),
            ("steps", &self.steps),
            ("sigma_mode", &self.sigma_mode),
            ("seed", &self.seed),
            ("runs", &self.runs),
            ("n", &self.n),
            ("d", &self.d),
            ("n_train", &self.n_train),
            ("n_test", &self.n_test),
            ("bins", &self.bins),
            ("times", &self.times),
            ("n_ref", &self.n_ref),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Small networks and short schedules.
    #[arg(long)]
    pub desk: bool,
    /// Run simulation-study repetitions on separate threads.
    #[arg(long)]
    pub parallel: bool,
    /// Cosine-anneal the learning rate.
    #[arg(long)]
    pub cosine: bool,
    /// Input CSVs have a header row.
    #[arg(long)]
    pub header: bool,
    /// Rank-transform data-scale input into pseudo-observations.
    #[arg(long)]
    pub pseudo: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

impl CommonArgs {
    fn flag_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (k, on) in [
            ("desk", self.desk),
            ("parallel", self.parallel),
            ("cosine", self.cosine),
            ("header", self.header),
            ("pseudo", self.pseudo),
        ] {
            if on {
                out.push((k.to_string(), "true".to_string()));
            }
        }
        out.extend(self.overrides.pairs());
        out
    }
}

impl CommandArgs {
    fn split(&self) -> (Command, &CommonArgs) {
        match self {
            CommandArgs::Train(a) => (Command::Train, a),
            CommandArgs::Sample(a) => (Command::Sample, a),
            CommandArgs::Density(a) => (Command::Density, a),
            CommandArgs::Diagnose(a) => (Command::Diagnose, a),
            CommandArgs::Simstudy(a) => (Command::Simstudy, a),
        }
    }
}

/// Resolve the full configuration from file, environment and flags.
pub fn resolve(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig> {
    let (command, args) = cli.command.split();
    let mut pairs = Vec::new();
    if let Some(p) = &args.config {
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
        pairs.extend(parse_kv(&text)?);
    }
    pairs.extend(env_pairs(env));
    pairs.extend(args.flag_pairs());
    let cfg = RunConfig::from_pairs(command, &pairs)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cfg: &RunConfig) -> Result<String> {
    match cfg.command {
        Command::Train => cmd_train(cfg),
        Command::Sample => cmd_sample(cfg),
        Command::Density => cmd_density(cfg),
        Command::Diagnose => cmd_diagnose(cfg),
        Command::Simstudy => cmd_simstudy(cfg),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) | Error::Training { .. } | Error::Sampling { .. } | Error::Build(_) => 3,
        Error::Domain(_) | Error::Size(_) | Error::Config(_) | Error::Index(_) | Error::Format(_) | Error::Io(_) => 2,
    }
}

/// Run a parsed command line against the process environment; returns the
/// exit code.
pub fn run(cli: Cli) -> i32 {
    match resolve(&cli, std::env::vars()).and_then(|cfg| execute(&cfg)) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_env_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("run.conf");
        std::fs::write(&conf, "epochs = 5\nlr = 0.1\nseed = 3\n").unwrap();
        let out = dir.path().join("o.ck");
        let cli = Cli::parse_from([
            "diffcop",
            "train",
            "--config",
            conf.to_str().unwrap(),
            "--model",
            "mixture_t_oracle",
            "--lr",
            "0.5",
            "--output",
            out.to_str().unwrap(),
        ]);
        let env = vec![
            ("CF_EPOCHS".to_string(), "9".to_string()),
            ("CF_LR".to_string(), "0.2".to_string()),
        ];
        let cfg = resolve(&cli, env).unwrap();
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.train.lr, 0.5);
        assert_eq!(cfg.seed, Some(3));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(
            exit_code(&Error::Training {
                step: 1,
                msg: "x".into(),
                last_good: None
            }),
            3
        );
    }
}
