//! The five subcommands. Each returns a short human-readable summary.

use std::path::{Path, PathBuf};

use super::config::{ModelKind, RunConfig};
use crate::cdc::{cdc_log_density, cdc_sample, train_cdc, CdcModel};
use crate::data::{CopulaMatrix, Scale};
use crate::error::{Error, Result};
use crate::metrics::{
    forward_w2_curve, kendall_tau_frobenius, ks_critical, ks_uniform, mean_loglik, mean_std, rank_histogram,
    wasserstein2, write_reports, ForwardProcess, MetricReport,
};
use crate::neural::{ArtifactKind, Checkpoint};
use crate::oracles::{mixture_t_build, GaussianCopula, MixtureTCopula};
use crate::reflection::{reflection_sample, train_reflection, ReflectionModel, VelocityField};
use crate::rng::RngStream;

/// A checkpoint loaded as whichever model it holds.
pub enum LoadedModel {
    Cdc(CdcModel),
    Reflection(ReflectionModel),
    Gaussian(GaussianCopula),
    MixtureT(MixtureTCopula),
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        Ok(match ck.kind {
            ArtifactKind::Classifier => LoadedModel::Cdc(CdcModel::from_checkpoint(&ck)?),
            ArtifactKind::Velocity => LoadedModel::Reflection(ReflectionModel::from_checkpoint(&ck)?),
            ArtifactKind::GaussianOracle => LoadedModel::Gaussian(GaussianCopula::from_checkpoint(&ck)?),
            ArtifactKind::MixtureTOracle => LoadedModel::MixtureT(MixtureTCopula::from_checkpoint(&ck)?),
        })
    }

    pub fn d(&self) -> usize {
        match self {
            LoadedModel::Cdc(m) => m.d(),
            LoadedModel::Reflection(m) => m.d(),
            LoadedModel::Gaussian(m) => m.d(),
            LoadedModel::MixtureT(m) => m.d(),
        }
    }

    /// Copula samples, plus exact log densities for analytic models.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<(CopulaMatrix, Option<Vec<f64>>)> {
        match self {
            LoadedModel::Cdc(m) => Ok((cdc_sample(m, n, rng)?, None)),
            LoadedModel::Reflection(m) => Ok((reflection_sample(m, n, rng)?, None)),
            LoadedModel::Gaussian(m) => {
                let u = m.sample(n, rng)?;
                let logs = u.rows().map(|r| m.logpdf(r)).collect::<Result<Vec<_>>>()?;
                Ok((u, Some(logs)))
            }
            LoadedModel::MixtureT(m) => {
                let (u, logs) = m.sample(n, rng)?;
                Ok((u, Some(logs)))
            }
        }
    }

    pub fn log_density(&self, u: &CopulaMatrix) -> Result<Vec<f64>> {
        match self {
            LoadedModel::Cdc(m) => cdc_log_density(m, u),
            LoadedModel::Reflection(_) => Err(Error::config("density unavailable for reflection models")),
            LoadedModel::Gaussian(m) => u.rows().map(|r| m.logpdf(r)).collect(),
            LoadedModel::MixtureT(m) => u.rows().map(|r| m.logpdf(r)).collect(),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::format(e.to_string())
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Copula-scale input, rank-transformed first when `pseudo` is set.
pub fn load_copula(path: &Path, cfg: &RunConfig) -> Result<CopulaMatrix> {
    if cfg.pseudo {
        CopulaMatrix::read_csv(path, cfg.header, Scale::Data)?.pseudo_observations()
    } else {
        CopulaMatrix::read_csv(path, cfg.header, Scale::Copula)
    }
}

fn required<'a>(key: &str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::config(format!("{key} is required")))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn mean_of(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed()?;
    let out = cfg.output()?;
    let mut rng = RngStream::new(seed, 0);
    if cfg.model == ModelKind::MixtureTOracle {
        let m = mixture_t_build(cfg.d, seed)?;
        m.to_checkpoint().save(out)?;
        return Ok(format!("built mixture-t oracle d={} -> {}", cfg.d, out.display()));
    }
    let data = load_copula(required("input", &cfg.input)?, cfg)?;
    let loss_path = cfg.loss.clone().unwrap_or_else(|| sibling(out, ".loss.csv"));
    match cfg.model {
        ModelKind::Gaussian => {
            let m = GaussianCopula::fit(&data)?;
            m.to_checkpoint().save(out)?;
            Ok(format!("fitted gaussian copula d={} -> {}", m.d(), out.display()))
        }
        ModelKind::Cdc => {
            if data.n() < 2 * cfg.train.batch {
                return Err(Error::config(format!(
                    "need at least 2*batch = {} rows, got {}",
                    2 * cfg.train.batch,
                    data.n()
                )));
            }
            let m = train_cdc(&data, &cfg.train, &mut rng)?;
            m.to_checkpoint().save(out)?;
            write_table(
                &loss_path,
                &["step", "alpha", "total", "ce", "mse"],
                m.history.iter().map(|r| {
                    vec![
                        r.step.to_string(),
                        r.alpha.to_string(),
                        r.parts.total.to_string(),
                        r.parts.ce.to_string(),
                        r.parts.mse.to_string(),
                    ]
                }),
            )?;
            let w = m.history.len().min(20);
            let first = mean_of(m.history[..w].iter().map(|r| r.parts.ce));
            let last = mean_of(m.history[m.history.len() - w..].iter().map(|r| r.parts.ce));
            Ok(format!(
                "trained cdc d={} k={} alpha={:.4}: ce {first:.4} -> {last:.4}; checkpoint {}",
                m.d(),
                m.k(),
                m.alpha,
                out.display()
            ))
        }
        ModelKind::Reflection => {
            if data.n() < 2 * cfg.train.batch {
                return Err(Error::config(format!(
                    "need at least 2*batch = {} rows, got {}",
                    2 * cfg.train.batch,
                    data.n()
                )));
            }
            let m = train_reflection(&data, &cfg.train, &mut rng)?;
            m.to_checkpoint().save(out)?;
            write_table(
                &loss_path,
                &["step", "loss"],
                m.history
                    .iter()
                    .enumerate()
                    .map(|(i, l)| vec![i.to_string(), l.to_string()]),
            )?;
            let v = mean_velocity_norm(&m, &data)?;
            Ok(format!(
                "trained reflection d={}: mean predicted velocity norm {v:.4}; checkpoint {}",
                m.d(),
                out.display()
            ))
        }
        ModelKind::MixtureTOracle => unreachable!("handled above"),
    }
}

/// Norm of the predicted velocity averaged over data rows at `T/2`.
pub fn mean_velocity_norm(m: &ReflectionModel, data: &CopulaMatrix) -> Result<f64> {
    let d = m.d();
    let rows = data.n().min(1000);
    let mut mean = vec![0.0; d];
    for row in data.rows().take(rows) {
        let v = m.net.velocity(row, 0.5 * m.terminal)?;
        for j in 0..d {
            mean[j] += v[j] / rows as f64;
        }
    }
    Ok(mean.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Empirical quantile of sorted `col` at `u`, by linear interpolation.
fn empirical_quantile(col: &[f64], u: f64) -> f64 {
    let pos = u * (col.len() - 1) as f64;
    let i = (pos.floor() as usize).min(col.len() - 1);
    let j = (i + 1).min(col.len() - 1);
    col[i] + (pos - i as f64) * (col[j] - col[i])
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed()?;
    let out = cfg.output()?;
    let mut model = LoadedModel::load(required("checkpoint", &cfg.checkpoint)?)?;
    if let LoadedModel::Reflection(m) = &mut model {
        if cfg.is_explicit("grid_exponent") {
            m.grid_exponent = cfg.train.grid_exponent;
        }
        if cfg.is_explicit("steps") {
            m.steps = cfg.train.steps;
        }
    }
    let mut rng = RngStream::new(seed, 1);
    let (u, logs) = model.sample(cfg.n, &mut rng)?;
    u.write_csv(out, None)?;
    let mut msg = format!("wrote {} x {} copula samples to {}", u.n(), u.d(), out.display());
    if let Some(p) = &cfg.logpdf_output {
        let logs = logs.ok_or_else(|| Error::config("exact log densities exist only for analytic models"))?;
        write_table(p, &["log_density"], logs.iter().map(|l| vec![l.to_string()]))?;
    }
    if let (Some(m), Some(p)) = (&cfg.marginals, &cfg.data_output) {
        let reference = CopulaMatrix::read_csv(m, cfg.header, Scale::Data)?;
        if reference.d() != u.d() {
            return Err(Error::size(format!(
                "marginals have d = {}, samples d = {}",
                reference.d(),
                u.d()
            )));
        }
        let cols: Vec<Vec<f64>> = (0..u.d())
            .map(|j| {
                let mut c = reference.column(j);
                c.sort_by(f64::total_cmp);
                c
            })
            .collect();
        let vals = u
            .rows()
            .flat_map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, &x)| empirical_quantile(&cols[j], x))
                    .collect::<Vec<_>>()
            })
            .collect();
        CopulaMatrix::new(vals, u.n(), u.d(), Scale::Data)?.write_csv(p, None)?;
        msg.push_str(&format!("; data scale to {}", p.display()));
    }
    Ok(msg)
}

pub fn cmd_density(cfg: &RunConfig) -> Result<String> {
    let out = cfg.output()?;
    let model = LoadedModel::load(required("checkpoint", &cfg.checkpoint)?)?;
    if let LoadedModel::Reflection(_) = model {
        return Err(Error::config("density unavailable for reflection models"));
    }
    let u = load_copula(required("input", &cfg.input)?, cfg)?;
    if u.d() != model.d() {
        return Err(Error::size(format!(
            "model has d = {}, input has d = {}",
            model.d(),
            u.d()
        )));
    }
    let logs = model.log_density(&u)?;
    write_table(
        out,
        &["log_density", "density"],
        logs.iter().map(|l| vec![l.to_string(), l.exp().to_string()]),
    )?;
    Ok(format!(
        "wrote {} densities to {} (mean log density {:.4})",
        logs.len(),
        out.display(),
        mean_of(logs.iter().copied())
    ))
}

/// The `density` column of a density table, or its first column.
fn read_densities(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let col = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .position(|h| h == "density")
        .unwrap_or(0);
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            let f = rec.get(col).ok_or_else(|| Error::format("short density row"))?;
            f.parse().map_err(|_| Error::format(format!("not a number: {f:?}")))
        })
        .collect()
}

fn head(m: &CopulaMatrix, n: usize) -> Result<CopulaMatrix> {
    m.select_rows(&(0..m.n().min(n)).collect::<Vec<_>>())
}

pub fn cmd_diagnose(cfg: &RunConfig) -> Result<String> {
    let dir = cfg.output()?;
    std::fs::create_dir_all(dir)?;
    let samples = load_copula(required("input", &cfg.input)?, cfg)?;
    let reference = load_copula(required("reference", &cfg.reference)?, cfg)?;
    if samples.d() != reference.d() {
        return Err(Error::size("samples and reference differ in dimension"));
    }
    let (n, d) = (samples.n(), samples.d());
    let crit = ks_critical(n, 1e-3);
    let ks: Vec<f64> = (0..d).map(|j| ks_uniform(&samples.column(j))).collect();
    write_table(
        &dir.join("ks.csv"),
        &["dim", "statistic", "critical", "pass"],
        ks.iter()
            .enumerate()
            .map(|(j, s)| vec![j.to_string(), s.to_string(), crit.to_string(), (*s < crit).to_string()]),
    )?;
    let heights = rank_histogram(&samples, cfg.bins);
    let b = cfg.bins as f64;
    write_table(
        &dir.join("rank_histogram.csv"),
        &["bin", "lower", "upper", "height"],
        heights.iter().enumerate().map(|(i, h)| {
            vec![
                i.to_string(),
                (i as f64 / b).to_string(),
                ((i + 1) as f64 / b).to_string(),
                h.to_string(),
            ]
        }),
    )?;
    let frob = kendall_tau_frobenius(&samples, &reference)?;
    let w2 = wasserstein2(&head(&samples, cfg.n_ref)?, &head(&reference, cfg.n_ref)?)?;
    let mut reports = vec![
        MetricReport::new("ks_max", ks.iter().cloned().fold(0.0, f64::max), n, d).with_meta("critical", crit),
        MetricReport::new("kendall_frobenius", frob, n, d),
        MetricReport::new("w2", w2, cfg.n_ref.min(n), d).with_meta("solver", "exact"),
    ];
    if let Some(p) = &cfg.densities {
        let dens = read_densities(p)?;
        reports.push(MetricReport::new("mean_loglik", mean_loglik(&dens)?, dens.len(), d));
    }
    write_reports(dir.join("metrics.csv"), &reports)?;
    let mut rng = RngStream::new(cfg.seed.unwrap_or(0), 2);
    let n_ref = cfg.n_ref.min(reference.n());
    let mut rows = Vec::new();
    for (name, process) in [
        ("ou", ForwardProcess::Ou { sigma: None }),
        ("reflection", ForwardProcess::Reflection),
    ] {
        for p in forward_w2_curve(&reference, process, &cfg.times, n_ref, &mut rng)? {
            rows.push(vec![
                name.to_string(),
                p.t.to_string(),
                p.w2.to_string(),
                p.baseline.to_string(),
            ]);
        }
    }
    write_table(&dir.join("w2_curve.csv"), &["process", "t", "w2", "baseline"], rows)?;
    Ok(format!(
        "ks_max {:.4} (critical {crit:.4}), kendall frobenius {frob:.4}, w2 {w2:.4}; csvs in {}",
        reports[0].value,
        dir.display()
    ))
}

/// One simulation-study repetition: absolute and squared log-density
/// errors of the trained model and of the oracle against itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimRun {
    pub mae: f64,
    pub mse: f64,
    pub oracle_mae: f64,
    pub oracle_mse: f64,
}

pub fn simstudy_run(oracle: &MixtureTCopula, cfg: &RunConfig, run: usize) -> Result<SimRun> {
    let mut rng = RngStream::new(cfg.seed.unwrap_or(0), run as u64);
    let (u, logs) = oracle.sample(cfg.n_train + cfg.n_test, &mut rng)?;
    let train = u.select_rows(&(0..cfg.n_train).collect::<Vec<_>>())?;
    let test = u.select_rows(&(cfg.n_train..u.n()).collect::<Vec<_>>())?;
    let truth = &logs[cfg.n_train..];
    let model = train_cdc(&train, &cfg.train, &mut rng)?;
    let est = cdc_log_density(&model, &test)?;
    let self_eval = test.rows().map(|r| oracle.logpdf(r)).collect::<Result<Vec<_>>>()?;
    let errs = |xs: &[f64]| {
        let m = xs.len() as f64;
        let abs = xs.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / m;
        let sq = xs.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / m;
        (abs, sq)
    };
    let (mae, mse) = errs(&est);
    let (oracle_mae, oracle_mse) = errs(&self_eval);
    Ok(SimRun {
        mae,
        mse,
        oracle_mae,
        oracle_mse,
    })
}

pub fn simstudy_runs(cfg: &RunConfig) -> Result<Vec<SimRun>> {
    let oracle = mixture_t_build(cfg.d, cfg.seed.unwrap_or(0))?;
    if cfg.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..cfg.runs)
                .map(|r| {
                    s.spawn({
                        let oracle = &oracle;
                        move || simstudy_run(oracle, cfg, r)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("simulation run panicked"))
                .collect()
        })
    } else {
        (0..cfg.runs).map(|r| simstudy_run(&oracle, cfg, r)).collect()
    }
}

pub fn cmd_simstudy(cfg: &RunConfig) -> Result<String> {
    let out = cfg.output()?;
    let runs = simstudy_runs(cfg)?;
    let stats = |f: fn(&SimRun) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    let (mae, std_mae) = stats(|r| r.mae);
    let (mse, std_mse) = stats(|r| r.mse);
    let (omae, ostd_mae) = stats(|r| r.oracle_mae);
    let (omse, ostd_mse) = stats(|r| r.oracle_mse);
    let d = cfg.d.to_string();
    write_table(
        out,
        &["model", "d", "MAE", "MSE", "std_MAE", "std_MSE"],
        [
            vec![
                "cdc".into(),
                d.clone(),
                mae.to_string(),
                mse.to_string(),
                std_mae.to_string(),
                std_mse.to_string(),
            ],
            vec![
                "oracle".into(),
                d,
                omae.to_string(),
                omse.to_string(),
                ostd_mae.to_string(),
                ostd_mse.to_string(),
            ],
        ],
    )?;
    Ok(format!(
        "d={} runs={}: cdc MAE {mae:.3} ± {std_mae:.3}, MSE {mse:.3} ± {std_mse:.3}; table {}",
        cfg.d,
        cfg.runs,
        out.display()
    ))
}
