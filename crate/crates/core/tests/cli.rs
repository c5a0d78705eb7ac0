use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dhmm(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dhmm"));
    cmd.args(args).env_remove("DHMM_SEED");
    if let Some(s) = seed {
        cmd.env("DHMM_SEED", s);
    }
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "dhmm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL_POISSON: &str = "\
# two-state Poisson, short run
kind = poisson
states = 2
theta = 10, 20, 0.8, 0.1
beta_scale = 40
beta_exponent = 1.01
n_max = 400
n_grid = 100, 200, 400
replications = 2
starts = 3
estimators = qmle
mc_samples = 2000
score_replications = 4
score_n = 100
";

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.conf");
    fs::write(&path, SMALL_POISSON).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let out = dir.path().to_str().unwrap();
    dhmm(&["simulate", "--config", &conf, "--out", out], None);
    let data = dir.path().join("trajectory.csv");
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 401, "header plus n_max rows");

    let fit = dhmm(
        &["fit", "--config", &conf, "--data", data.to_str().unwrap(), "--estimator", "qmle"],
        None,
    );
    let record = String::from_utf8(fit.stdout).unwrap();
    let keys: Vec<&str> = record
        .lines()
        .map(|l| l.split(" = ").next().unwrap())
        .collect();
    assert_eq!(keys, dhmm::estimate::FIT_RECORD_KEYS);
    let theta: Vec<f64> = record
        .lines()
        .find_map(|l| l.strip_prefix("theta_hat = "))
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(theta.len(), 4);
    // intensities are identifiable up to order
    let (lo, hi) = (theta[0].min(theta[1]), theta[0].max(theta[1]));
    assert!((lo - 10.0).abs() < 2.0 && (hi - 20.0).abs() < 2.0, "{theta:?}");
}

#[test]
fn experiment_outputs_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    dhmm(&["experiment", "--config", &conf, "--out", a.to_str().unwrap()], None);
    dhmm(&["experiment", "--config", &conf, "--out", b.to_str().unwrap()], None);
    dhmm(&["experiment", "--config", &conf, "--out", c.to_str().unwrap()], Some("99"));
    for name in ["replicated.csv", "aggregate.csv"] {
        let fa = fs::read(a.join(name)).unwrap();
        assert_eq!(fa, fs::read(b.join(name)).unwrap(), "{name} differs between runs");
        assert_ne!(fa, fs::read(c.join(name)).unwrap(), "DHMM_SEED had no effect on {name}");
    }
    let agg = fs::read_to_string(a.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 3);
}

#[test]
fn conditions_and_score_files() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let out = dir.path().to_str().unwrap();
    let printed = dhmm(&["conditions", "--config", &conf, "--out", out], None);
    let text = String::from_utf8(printed.stdout).unwrap();
    for id in ["P1", "P2", "C1", "C2", "C3", "H1", "H2", "H3", "H4"] {
        assert!(text.contains(id), "{id} missing from report");
    }
    let csv = fs::read_to_string(dir.path().join("conditions.csv")).unwrap();
    assert!(csv.starts_with(dhmm::diagnostics::CONDITIONS_CSV_HEADER));

    dhmm(&["score", "--config", &conf, "--out", out], None);
    let score = fs::read_to_string(dir.path().join("score.csv")).unwrap();
    assert!(score.starts_with(dhmm::diagnostics::SCORE_CSV_HEADER));
    assert!(score.contains("lambda_min_G"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let run = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_dhmm")).args(args).output().unwrap();
    let out = run(&["experiment", "--preset", "nonesuch"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    fs::write(&path, format!("{SMALL_POISSON}colour = blue\n")).unwrap();
    let out = run(&["conditions", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
