//! End-to-end runs of the `diffcop` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffcop::oracles::GaussianCopula;
use diffcop::processes::CorrelationMatrix;
use diffcop::{CopulaMatrix, RngStream, Scale};

fn diffcop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffcop"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = diffcop(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gaussian_csv(dir: &Path, rho: f64, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("gauss_{seed}.csv"));
    let g = GaussianCopula::new(CorrelationMatrix::bivariate(rho).unwrap());
    g.sample(n, &mut RngStream::new(seed, 0))
        .unwrap()
        .write_csv(&path, None)
        .unwrap();
    path
}

fn uniform_csv(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let mut rng = RngStream::new(seed, 0);
    CopulaMatrix::new((0..2 * n).map(|_| rng.uniform()).collect(), n, 2, Scale::Copula)
        .unwrap()
        .write_csv(&path, None)
        .unwrap();
    path
}

fn read_table(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn train_cdc_descends_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 0.8, 4000, 7);
    let a = dir.path().join("a.ck");
    let b = dir.path().join("b.ck");
    let common = [
        "--model",
        "cdc",
        "--desk",
        "--epochs",
        "300",
        "--k",
        "10",
        "--seed",
        "7",
        "--input",
        p(&data),
    ];
    ok(&[&["train"], &common[..], &["--output", p(&a)]].concat());
    ok(&[&["train"], &common[..], &["--output", p(&b)]].concat());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let loss = read_table(&dir.path().join("a.ck.loss.csv"));
    assert_eq!(loss.len(), 300);
    let ce = |rows: &[Vec<String>]| rows.iter().map(|r| r[3].parse::<f64>().unwrap()).sum::<f64>() / rows.len() as f64;
    assert!(ce(&loss[280..]) < ce(&loss[..20]));

    let s1 = dir.path().join("s1.csv");
    let s2 = dir.path().join("s2.csv");
    for s in [&s1, &s2] {
        ok(&[
            "sample",
            "--checkpoint",
            p(&a),
            "--n",
            "300",
            "--seed",
            "3",
            "--output",
            p(s),
        ]);
    }
    assert_eq!(std::fs::read(&s1).unwrap(), std::fs::read(&s2).unwrap());
    let m = CopulaMatrix::read_csv(&s1, false, Scale::Copula).unwrap();
    assert_eq!((m.n(), m.d()), (300, 2));
}

#[test]
fn train_reflection_on_independent_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = uniform_csv(dir.path(), "indep.csv", 2000, 5);
    let ck = dir.path().join("r.ck");
    let out = ok(&[
        "train",
        "--model",
        "reflection",
        "--desk",
        "--epochs",
        "600",
        "--batch",
        "128",
        "--hidden",
        "32,32",
        "--seed",
        "5",
        "--input",
        p(&data),
        "--output",
        p(&ck),
    ]);
    let norm: f64 = out
        .split("norm ")
        .nth(1)
        .and_then(|s| s.split(';').next())
        .and_then(|s| s.trim().parse().ok())
        .expect("norm in report");
    assert!(norm <= 0.1, "{out}");

    let (s1, s2) = (dir.path().join("s1.csv"), dir.path().join("s2.csv"));
    for s in [&s1, &s2] {
        ok(&[
            "sample",
            "--checkpoint",
            p(&ck),
            "--n",
            "500",
            "--seed",
            "1",
            "--output",
            p(s),
        ]);
    }
    assert_eq!(std::fs::read(&s1).unwrap(), std::fs::read(&s2).unwrap());
    let m = CopulaMatrix::read_csv(&s1, false, Scale::Copula).unwrap();
    assert_eq!((m.n(), m.d()), (500, 2));

    let d = diffcop(&[
        "density",
        "--checkpoint",
        p(&ck),
        "--input",
        p(&data),
        "--output",
        p(&dir.path().join("d.csv")),
    ]);
    assert_eq!(d.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&d.stderr).contains("density unavailable"));
}

#[test]
fn analytic_densities() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("g.ck");
    GaussianCopula::new(CorrelationMatrix::bivariate(0.5).unwrap())
        .to_checkpoint()
        .save(&ck)
        .unwrap();
    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "0.5,0.5\n").unwrap();
    let out = dir.path().join("dens.csv");
    ok(&[
        "density",
        "--checkpoint",
        p(&ck),
        "--input",
        p(&pts),
        "--output",
        p(&out),
    ]);
    let c: f64 = read_table(&out)[0][1].parse().unwrap();
    assert!((c - 1.154_70).abs() < 1e-5);

    let s = dir.path().join("g.csv");
    ok(&[
        "sample",
        "--checkpoint",
        p(&ck),
        "--n",
        "10000",
        "--seed",
        "1",
        "--output",
        p(&s),
    ]);
    let m = CopulaMatrix::read_csv(&s, false, Scale::Copula).unwrap();
    let crit = diffcop::metrics::ks_critical(m.n(), 1e-3);
    for j in 0..2 {
        assert!(diffcop::metrics::ks_uniform(&m.column(j)) < crit);
    }

    let mt = dir.path().join("mt.ck");
    ok(&[
        "train",
        "--model",
        "mixture_t_oracle",
        "--d",
        "3",
        "--seed",
        "2",
        "--output",
        p(&mt),
    ]);
    let s = dir.path().join("s.csv");
    let logs = dir.path().join("logs.csv");
    ok(&[
        "sample",
        "--checkpoint",
        p(&mt),
        "--n",
        "200",
        "--seed",
        "1",
        "--output",
        p(&s),
        "--logpdf-output",
        p(&logs),
    ]);
    ok(&["density", "--checkpoint", p(&mt), "--input", p(&s), "--output", p(&out)]);
    for (stored, eval) in read_table(&logs).iter().zip(read_table(&out)) {
        let (a, b): (f64, f64) = (stored[0].parse().unwrap(), eval[0].parse().unwrap());
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}

#[test]
fn sample_to_data_scale() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("g.ck");
    GaussianCopula::new(CorrelationMatrix::bivariate(0.3).unwrap())
        .to_checkpoint()
        .save(&ck)
        .unwrap();
    let marg = dir.path().join("marg.csv");
    std::fs::write(&marg, "0,10\n1,20\n2,30\n").unwrap();
    let (s, x) = (dir.path().join("s.csv"), dir.path().join("x.csv"));
    ok(&[
        "sample",
        "--checkpoint",
        p(&ck),
        "--n",
        "50",
        "--seed",
        "1",
        "--output",
        p(&s),
        "--marginals",
        p(&marg),
        "--data-output",
        p(&x),
    ]);
    let u = CopulaMatrix::read_csv(&s, false, Scale::Copula).unwrap();
    let v = CopulaMatrix::read_csv(&x, false, Scale::Data).unwrap();
    for i in 0..u.n() {
        assert!((v.get(i, 0) - 2.0 * u.get(i, 0)).abs() < 1e-12);
        assert!((v.get(i, 1) - (10.0 + 20.0 * u.get(i, 1))).abs() < 1e-9);
    }
}

#[test]
fn diagnose_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = uniform_csv(dir.path(), "a.csv", 20_000, 1);
    let b = uniform_csv(dir.path(), "b.csv", 20_000, 2);
    let out = dir.path().join("diag");
    ok(&[
        "diagnose",
        "--input",
        p(&a),
        "--reference",
        p(&b),
        "--output",
        p(&out),
        "--n-ref",
        "200",
        "--times",
        "0,1",
    ]);
    for row in read_table(&out.join("rank_histogram.csv")) {
        let h: f64 = row[3].parse().unwrap();
        assert!((h - 1.0).abs() < 0.05, "{h}");
    }
    assert_eq!(read_table(&out.join("w2_curve.csv")).len(), 4);
    assert_eq!(read_table(&out.join("ks.csv")).len(), 2);

    let n = 50;
    let line: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let como = dir.path().join("como.csv");
    let anti = dir.path().join("anti.csv");
    CopulaMatrix::new(line.iter().flat_map(|&x| [x, x]).collect(), n, 2, Scale::Copula)
        .unwrap()
        .write_csv(&como, None)
        .unwrap();
    CopulaMatrix::new(line.iter().flat_map(|&x| [x, 1.0 - x]).collect(), n, 2, Scale::Copula)
        .unwrap()
        .write_csv(&anti, None)
        .unwrap();
    ok(&[
        "diagnose",
        "--input",
        p(&como),
        "--reference",
        p(&anti),
        "--output",
        p(&out),
        "--times",
        "0",
    ]);
    let metrics = read_table(&out.join("metrics.csv"));
    let frob: f64 = metrics.iter().find(|r| r[0] == "kendall_frobenius").unwrap()[1]
        .parse()
        .unwrap();
    assert!((frob - 2.0 * 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn simstudy_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let args = [
        "simstudy",
        "--desk",
        "--d",
        "3",
        "--runs",
        "2",
        "--n-train",
        "600",
        "--n-test",
        "100",
        "--epochs",
        "30",
        "--batch",
        "64",
        "--seed",
        "4",
    ];
    ok(&[&args[..], &["--output", p(&a)]].concat());
    ok(&[&args[..], &["--output", p(&b), "--parallel"]].concat());
    let rows = read_table(&a);
    assert_eq!(rows, read_table(&b));
    assert_eq!(rows[0][0], "cdc");
    assert_eq!(rows[1][0], "oracle");
    assert!(rows[1][2].parse::<f64>().unwrap() < 1e-10);
    let mut r = csv::Reader::from_path(&a).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["model", "d", "MAE", "MSE", "std_MAE", "std_MSE"]
    );
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_csv(dir.path(), 0.5, 600, 1);
    let out = dir.path().join("x.ck");
    let missing = diffcop(&[
        "sample",
        "--checkpoint",
        p(&dir.path().join("nope.ck")),
        "--seed",
        "1",
        "--output",
        p(&out),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let no_seed = diffcop(&["train", "--input", p(&data), "--output", p(&out)]);
    assert_eq!(no_seed.status.code(), Some(2));
    let bad_value = diffcop(&[
        "train",
        "--input",
        p(&data),
        "--output",
        p(&out),
        "--seed",
        "1",
        "--epochs",
        "many",
    ]);
    assert_eq!(bad_value.status.code(), Some(2));
    let small = diffcop(&[
        "train",
        "--input",
        p(&data),
        "--output",
        p(&out),
        "--seed",
        "1",
        "--batch",
        "512",
    ]);
    assert_eq!(small.status.code(), Some(2));
    let diverge = diffcop(&[
        "train",
        "--input",
        p(&data),
        "--output",
        p(&out),
        "--seed",
        "1",
        "--desk",
        "--batch",
        "64",
        "--epochs",
        "20",
        "--lr",
        "1e300",
    ]);
    assert_eq!(diverge.status.code(), Some(3));
}

#[test]
fn config_file_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    let out = dir.path().join("mt.ck");
    std::fs::write(
        &conf,
        format!(
            "# oracle build\nmodel = mixture_t_oracle\nd = 2\noutput = {}\n",
            p(&out)
        ),
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_diffcop"))
        .args(["train", "--config", p(&conf)])
        .env("CF_SEED", "9")
        .env("CF_D", "4")
        .output()
        .unwrap();
    assert!(status.status.success());
    let ck = diffcop::neural::Checkpoint::load(&out).unwrap();
    assert_eq!(ck.dims[0], 4);
}
