//! Config-driven estimation experiments: single-trajectory error traces,
//! replicated mean errors, the constant-noise counterexample, the rounded
//! hybrid estimator, condition reports and score diagnostics.
//!
//! Configs are flat `key = value` text. Lines starting with `#` are comments
//! and lists are comma separated. Keys:
//!
//! | key | default |
//! |---|---|
//! | `kind` | required: `poisson`, `gaussian`, `hybrid`, `counterexample` |
//! | `states` | required (1 for `counterexample`) |
//! | `dim` | 1 |
//! | `theta` | required, parameter vector θ* |
//! | `beta_scale`, `beta_exponent`, `beta_floor` | 0, 1, 0: β_n = floor + scale·n^(−exponent) |
//! | `nu` | `stationary` (or `uniform`, `counting`, explicit weights) |
//! | `n_max` | required |
//! | `n_grid` | 20 log-spaced points from 50 to `n_max` |
//! | `replications` | 1 |
//! | `seed` | 0 (overridden by `DHMM_SEED` when given to [`load_config`]) |
//! | `estimators` | `qmle,mle` (`qmle` for the counterexample and hybrid modes) |
//! | `starts`, `max_iters`, `value_tol`, `param_tol` | 8, 2000, 1e-9, 1e-8 |
//! | `eps_p` | 1e-6 |
//! | `lower`, `upper` | per-family defaults |
//! | `mode` | `single`, `replicated`, `counterexample`, `hybrid`; inferred from kind and replications |
//! | `output` | none |
//! | `mc_samples` | 100000 |
//! | `score_replications`, `score_n` | 200, 2000 |
//! | `c3_points` | none; `;`-separated parameter vectors |
//! | `dump_trajectories` | false |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::diagnostics::{check_all, reports_csv, score_diagnostics, ConditionReport, DiagnosticSettings, ScoreDiagnostics, ScoreSettings};
use crate::error::{DhmmError, Result};
use crate::estimate::{error_trace, EstimatorKind, FitResult, NuSpec, OptimizerConfig, TracePoint};
use crate::num::fmt_f64;
use crate::models::{round_sequence, DhmModel, ModelKind, NoiseSchedule, ObsSeq};
use crate::params::{ParamSpace, ParamVector};
use crate::simulate::{derive_seed, simulate, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Replicated,
    Counterexample,
    Hybrid,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Replicated => "replicated",
            Mode::Counterexample => "counterexample",
            Mode::Hybrid => "hybrid",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "replicated" => Ok(Mode::Replicated),
            "counterexample" => Ok(Mode::Counterexample),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(DhmmError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: DhmModel,
    pub theta_star: ParamVector,
    pub nu: NuSpec,
    pub n_max: usize,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub optimizer: OptimizerConfig,
    pub space: ParamSpace,
    pub mode: Mode,
    pub output: Option<PathBuf>,
    pub mc_samples: usize,
    pub score_replications: usize,
    pub score_n: usize,
    pub c3_points: Vec<ParamVector>,
    pub dump_trajectories: bool,
}

/// 20 log-spaced sample sizes from 50 (or `n_max` if smaller) to `n_max`.
pub fn default_grid(n_max: usize) -> Vec<usize> {
    let lo = 50.min(n_max).max(1) as f64;
    let hi = n_max as f64;
    let mut grid: Vec<usize> = (0..20)
        .map(|i| (lo * (hi / lo).powf(i as f64 / 19.0)).round() as usize)
        .collect();
    grid.dedup();
    *grid.last_mut().unwrap() = n_max;
    grid
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| DhmmError::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(DhmmError::Config(format!("line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(map)
}

struct Keys(BTreeMap<String, String>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| DhmmError::Config(format!("missing required key `{key}`")))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| DhmmError::Config(format!("`{key} = {v}`: {e}"))),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)
            .map(|v| parse_list(key, &v))
            .transpose()
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| DhmmError::Config(format!("`{key}` entry `{}`: {e}", p.trim())))
        })
        .collect()
}

/// Parses a config; `env_seed` (the `DHMM_SEED` value) overrides `seed`.
pub fn load_config(text: &str, env_seed: Option<&str>) -> Result<ExperimentConfig> {
    let mut keys = Keys(parse_pairs(text)?);
    let kind = ModelKind::parse(&keys.required("kind")?)?;
    let states = match kind {
        ModelKind::Counterexample => keys.parsed("states", 1usize)?,
        _ => keys
            .required("states")?
            .parse()
            .map_err(|e| DhmmError::Config(format!("states: {e}")))?,
    };
    let dim = keys.parsed("dim", 1usize)?;
    let schedule = NoiseSchedule::new(
        keys.parsed("beta_scale", 0.0)?,
        keys.parsed("beta_exponent", 1.0)?,
        keys.parsed("beta_floor", 0.0)?,
    )?;
    let model = DhmModel::new(kind, states, dim, schedule)?;
    let layout = model.layout();
    let theta_star = ParamVector::new(layout, parse_list("theta", &keys.required("theta")?)?)?;
    let nu = NuSpec::parse(&keys.take("nu").unwrap_or_else(|| "stationary".into()))?;
    let n_max: usize = keys
        .required("n_max")?
        .parse()
        .map_err(|e| DhmmError::Config(format!("n_max: {e}")))?;
    if n_max == 0 {
        return Err(DhmmError::Config("n_max must be positive".into()));
    }
    let n_grid = keys.list("n_grid")?.unwrap_or_else(|| default_grid(n_max));
    let replications = keys.parsed("replications", 1usize)?;
    let mut seed = keys.parsed("seed", 0u64)?;
    if let Some(s) = env_seed {
        seed = s
            .trim()
            .parse()
            .map_err(|e| DhmmError::Config(format!("DHMM_SEED = {s}: {e}")))?;
    }
    let mode = match keys.take("mode") {
        Some(m) => Mode::parse(&m)?,
        None => match kind {
            ModelKind::Counterexample => Mode::Counterexample,
            ModelKind::Hybrid => Mode::Hybrid,
            _ if replications > 1 => Mode::Replicated,
            _ => Mode::Single,
        },
    };
    let default_estimators = match mode {
        Mode::Counterexample | Mode::Hybrid => "qmle",
        _ => "qmle,mle",
    };
    let estimators = keys
        .take("estimators")
        .unwrap_or_else(|| default_estimators.into())
        .split(',')
        .map(EstimatorKind::parse)
        .collect::<Result<Vec<_>>>()?;
    let defaults = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        n_starts: keys.parsed("starts", defaults.n_starts)?,
        max_iters: keys.parsed("max_iters", defaults.max_iters)?,
        value_tol: keys.parsed("value_tol", defaults.value_tol)?,
        param_tol: keys.parsed("param_tol", defaults.param_tol)?,
        seed,
        keep_trace: false,
    };
    optimizer.validate()?;
    let base = ParamSpace::default_for(layout);
    let eps_p = keys.parsed("eps_p", base.eps_p())?;
    let lower = keys.list("lower")?.unwrap_or_else(|| base.lower().to_vec());
    let upper = keys.list("upper")?.unwrap_or_else(|| base.upper().to_vec());
    let space = ParamSpace::new(layout, lower, upper, eps_p)?;
    let output = keys.take("output").map(PathBuf::from);
    let mc_samples = keys.parsed("mc_samples", 100_000usize)?;
    let score_replications = keys.parsed("score_replications", 200usize)?;
    let score_n = keys.parsed("score_n", 2000usize)?;
    let c3_points = match keys.take("c3_points") {
        None => Vec::new(),
        Some(v) => v
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| ParamVector::new(layout, parse_list("c3_points", p)?))
            .collect::<Result<Vec<_>>>()?,
    };
    let dump_trajectories = keys.parsed("dump_trajectories", false)?;
    if let Some(extra) = keys.0.keys().next() {
        return Err(DhmmError::Config(format!("unknown key `{extra}`")));
    }
    let cfg = ExperimentConfig {
        model,
        theta_star,
        nu,
        n_max,
        n_grid,
        replications,
        seed,
        estimators,
        optimizer,
        space,
        mode,
        output,
        mc_samples,
        score_replications,
        score_n,
        c3_points,
        dump_trajectories,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty()
            || self.n_grid[0] == 0
            || self.n_grid.windows(2).any(|w| w[0] >= w[1])
            || *self.n_grid.last().unwrap() > self.n_max
        {
            return Err(DhmmError::Config("n_grid must be ascending within [1, n_max]".into()));
        }
        if self.replications == 0 {
            return Err(DhmmError::Config("replications must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(DhmmError::Config("no estimators selected".into()));
        }
        if !self.space.contains(self.theta_star.values()) {
            return Err(DhmmError::Config("theta lies outside the parameter box".into()));
        }
        match self.mode {
            Mode::Counterexample if self.model.kind() != ModelKind::Counterexample => {
                Err(DhmmError::Config("counterexample mode needs kind = counterexample".into()))
            }
            Mode::Hybrid if self.model.kind() != ModelKind::Hybrid => {
                Err(DhmmError::Config("hybrid mode needs kind = hybrid".into()))
            }
            _ => Ok(()),
        }
    }

    /// Seed of replication `rep`; also the optimizer seed for its fits.
    pub fn replication_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, rep as u64)
    }

    fn optimizer_for(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            seed,
            ..self.optimizer.clone()
        }
    }

    pub fn simulate_replication(&self, rep: usize) -> Result<Trajectory> {
        let seed = self.replication_seed(rep);
        let nu = match &self.nu {
            NuSpec::Stationary => None,
            other => Some(other.resolve(&self.theta_star)?),
        };
        simulate(&self.model, &self.theta_star, nu.as_ref(), self.n_max, seed)
    }
}

pub const PRESETS: [&str; 6] = ["fig3", "fig4", "fig5", "fig6", "counterexample", "hybrid"];

/// Config text of a named preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    Ok(match name {
        "fig3" => FIG3,
        "fig4" => FIG4,
        "fig5" => FIG5,
        "fig6" => FIG6,
        "counterexample" => COUNTEREXAMPLE,
        "hybrid" => HYBRID,
        other => {
            return Err(DhmmError::Config(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    load_config(preset_text(name)?, None)
}

const FIG3: &str = "\
kind = poisson
states = 2
theta = 10, 20, 0.8, 0.1
beta_scale = 40
beta_exponent = 1.01
n_max = 5000
replications = 1
seed = 1
";

const FIG4: &str = "\
kind = poisson
states = 2
theta = 10, 20, 0.8, 0.1
beta_scale = 40
beta_exponent = 1.01
n_max = 5000
replications = 100
seed = 1
";

const FIG5: &str = "\
kind = gaussian
states = 2
dim = 1
theta = 0, 4, 0.5, 0.5, 0.4, 0.5
beta_scale = 10
beta_exponent = 0.75
n_max = 5000
replications = 1
seed = 1
";

const FIG6: &str = "\
kind = gaussian
states = 2
dim = 1
theta = 0, 4, 0.5, 0.5, 0.4, 0.5
beta_scale = 10
beta_exponent = 0.75
n_max = 5000
replications = 100
seed = 1
";

const COUNTEREXAMPLE: &str = "\
kind = counterexample
theta = 0, 1
beta_floor = 0.5
n_max = 100000
n_grid = 1000, 10000, 100000
replications = 20
seed = 1
";

const HYBRID: &str = "\
kind = hybrid
states = 2
theta = 10, 20, 0.8, 0.1
beta_scale = 1
beta_exponent = 1
n_max = 5000
n_grid = 500, 1000, 2000, 5000
replications = 20
seed = 1
";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub n: usize,
    pub estimator: EstimatorKind,
    /// NaN when the fit failed.
    pub error: f64,
    pub log_lik: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub n: usize,
    pub estimator: EstimatorKind,
    pub mean_error: f64,
    pub stderr: f64,
    pub count: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRow {
    pub seed: u64,
    pub n: usize,
    pub error_theta_star: f64,
    pub error_theta0: f64,
    pub mean_hat: f64,
    pub var_hat: f64,
    pub log_lik: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridRow {
    pub seed: u64,
    pub n: usize,
    pub error_rounded: f64,
    pub error_raw: f64,
    pub difference: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub aggregate: Vec<AggregateRow>,
    pub counterexample: Vec<CounterexampleRow>,
    pub hybrid: Vec<HybridRow>,
    /// (file name, contents) in write order.
    pub files: Vec<(String, String)>,
}

impl ExperimentResult {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }
}

/// Observations an estimator sees: rounded z for the hybrid quasi-likelihood,
/// raw z otherwise.
pub fn estimator_input(model: &DhmModel, kind: EstimatorKind, z: &ObsSeq) -> ObsSeq {
    if model.kind() == ModelKind::Hybrid && kind == EstimatorKind::Qmle {
        round_sequence(z)
    } else {
        z.clone()
    }
}

fn trace_for(cfg: &ExperimentConfig, kind: EstimatorKind, traj: &Trajectory) -> Result<Vec<TracePoint>> {
    let obs = estimator_input(&cfg.model, kind, &traj.z);
    error_trace(
        kind,
        &cfg.model,
        &cfg.theta_star,
        &obs,
        &cfg.n_grid,
        &cfg.nu,
        &cfg.space,
        &cfg.optimizer_for(traj.seed),
    )
}

fn fit_parts(fit: &std::result::Result<FitResult, DhmmError>) -> (f64, bool) {
    match fit {
        Ok(f) => (f.log_lik, f.converged),
        Err(_) => (f64::NAN, false),
    }
}

fn replication_rows(cfg: &ExperimentConfig, rep: usize) -> Result<(Vec<ResultRow>, Trajectory)> {
    let traj = cfg.simulate_replication(rep)?;
    let mut rows = Vec::new();
    for &kind in &cfg.estimators {
        for point in trace_for(cfg, kind, &traj)? {
            let (log_lik, converged) = fit_parts(&point.fit);
            rows.push(ResultRow {
                seed: traj.seed,
                n: point.n,
                estimator: kind,
                error: point.error,
                log_lik,
                converged,
            });
        }
    }
    Ok((rows, traj))
}

fn trajectory_file(rep: usize) -> String {
    format!("trajectory_{rep:03}.csv")
}

fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| DhmmError::Io(e.to_string()))
}

fn header_line(cols: &[&str]) -> String {
    let mut s = cols.join(",");
    s.push('\n');
    s
}

/// Mean error and standard error per (n, estimator) over the rows whose fit
/// succeeded; `replications` − count is reported as excluded.
pub fn aggregate(rows: &[ResultRow], grid: &[usize], estimators: &[EstimatorKind], replications: usize) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &n in grid {
        for &estimator in estimators {
            let errors: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.estimator == estimator && r.error.is_finite())
                .map(|r| r.error)
                .collect();
            let count = errors.len();
            let mean = errors.iter().sum::<f64>() / count as f64;
            let stderr = if count > 1 {
                let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
                (var / count as f64).sqrt()
            } else {
                0.0
            };
            out.push(AggregateRow {
                n,
                estimator,
                mean_error: mean,
                stderr,
                count,
                excluded: replications - count.min(replications),
            });
        }
    }
    out
}

pub fn run_single(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let (rows, traj) = replication_rows(cfg, 0)?;
    let mut csv = header_line(&["n", "estimator", "error", "log_lik", "converged"]);
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.n, r.estimator.name(), fmt_f64(r.error), fmt_f64(r.log_lik), r.converged);
    }
    let mut files = vec![("single.csv".to_string(), csv)];
    if cfg.dump_trajectories {
        files.push((trajectory_file(0), trajectory_csv(&traj)?));
    }
    let aggregate = aggregate(&rows, &cfg.n_grid, &cfg.estimators, 1);
    Ok(ExperimentResult {
        rows,
        aggregate,
        files,
        ..Default::default()
    })
}

/// Runs `f` for every replication on the current rayon pool, in index order.
fn per_replication<T: Send>(cfg: &ExperimentConfig, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..cfg.replications).into_par_iter().map(f).collect()
}

pub fn run_replicated(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let reps = per_replication(cfg, |rep| replication_rows(cfg, rep))?;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    let mut csv = header_line(&["seed", "n", "estimator", "error", "log_lik", "converged"]);
    for (rep, (rep_rows, traj)) in reps.into_iter().enumerate() {
        for r in &rep_rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.seed,
                r.n,
                r.estimator.name(),
                fmt_f64(r.error),
                fmt_f64(r.log_lik),
                r.converged
            );
        }
        rows.extend(rep_rows);
        if cfg.dump_trajectories {
            files.push((trajectory_file(rep), trajectory_csv(&traj)?));
        }
    }
    let agg = aggregate(&rows, &cfg.n_grid, &cfg.estimators, cfg.replications);
    let mut agg_csv = header_line(&["n", "estimator", "mean_error", "stderr", "count", "excluded"]);
    for a in &agg {
        let _ = writeln!(
            agg_csv,
            "{},{},{},{},{},{}",
            a.n,
            a.estimator.name(),
            fmt_f64(a.mean_error),
            fmt_f64(a.stderr),
            a.count,
            a.excluded
        );
    }
    files.insert(0, ("aggregate.csv".to_string(), agg_csv));
    files.insert(0, ("replicated.csv".to_string(), csv));
    Ok(ExperimentResult {
        rows,
        aggregate: agg,
        files,
        ..Default::default()
    })
}

/// Constant-floor model: errors of the QMLE in (mean, variance) coordinates
/// against θ* and against the limit (μ*, σ*² + β²).
pub fn run_counterexample(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.model.kind() != ModelKind::Counterexample {
        return Err(DhmmError::WrongModelKind {
            expected: "counterexample",
            got: cfg.model.kind().name(),
        });
    }
    let floor = cfg.model.schedule().floor();
    let (mu, sigma) = (cfg.theta_star.values()[0], cfg.theta_star.values()[1]);
    let star = [mu, sigma * sigma];
    let limit = [mu, sigma * sigma + floor * floor];
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let reps = per_replication(cfg, |rep| {
        let traj = cfg.simulate_replication(rep)?;
        let trace = trace_for(cfg, EstimatorKind::Qmle, &traj)?;
        let rows: Vec<CounterexampleRow> = trace
            .iter()
            .map(|p| match &p.fit {
                Ok(f) => {
                    let v = f.theta_hat.values();
                    let hat = [v[0], v[1] * v[1]];
                    CounterexampleRow {
                        seed: traj.seed,
                        n: p.n,
                        error_theta_star: dist(&hat, &star),
                        error_theta0: dist(&hat, &limit),
                        mean_hat: hat[0],
                        var_hat: hat[1],
                        log_lik: f.log_lik,
                        converged: f.converged,
                    }
                }
                Err(_) => CounterexampleRow {
                    seed: traj.seed,
                    n: p.n,
                    error_theta_star: f64::NAN,
                    error_theta0: f64::NAN,
                    mean_hat: f64::NAN,
                    var_hat: f64::NAN,
                    log_lik: f64::NAN,
                    converged: false,
                },
            })
            .collect();
        Ok(rows)
    })?;
    let rows: Vec<CounterexampleRow> = reps.into_iter().flatten().collect();
    let mut csv = header_line(&[
        "seed",
        "n",
        "error_theta_star",
        "error_theta0",
        "mean_hat",
        "var_hat",
        "log_lik",
        "converged",
    ]);
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            r.n,
            fmt_f64(r.error_theta_star),
            fmt_f64(r.error_theta0),
            fmt_f64(r.mean_hat),
            fmt_f64(r.var_hat),
            fmt_f64(r.log_lik),
            r.converged
        );
    }
    Ok(ExperimentResult {
        counterexample: rows,
        files: vec![("counterexample.csv".to_string(), csv)],
        ..Default::default()
    })
}

/// Hybrid model: the QMLE on rounded observations against the exact-density
/// estimator on raw observations.
pub fn run_hybrid(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.model.kind() != ModelKind::Hybrid {
        return Err(DhmmError::WrongModelKind {
            expected: "hybrid",
            got: cfg.model.kind().name(),
        });
    }
    let reps = per_replication(cfg, |rep| {
        let traj = cfg.simulate_replication(rep)?;
        let rounded = trace_for(cfg, EstimatorKind::Qmle, &traj)?;
        let raw = trace_for(cfg, EstimatorKind::Mle, &traj)?;
        Ok(rounded
            .iter()
            .zip(&raw)
            .map(|(a, b)| {
                let difference = match (&a.fit, &b.fit) {
                    (Ok(fa), Ok(fb)) => fa.theta_hat.distance(&fb.theta_hat),
                    _ => f64::NAN,
                };
                HybridRow {
                    seed: traj.seed,
                    n: a.n,
                    error_rounded: a.error,
                    error_raw: b.error,
                    difference,
                    converged: fit_parts(&a.fit).1 && fit_parts(&b.fit).1,
                }
            })
            .collect::<Vec<_>>())
    })?;
    let rows: Vec<HybridRow> = reps.into_iter().flatten().collect();
    let mut csv = header_line(&["seed", "n", "error_rounded", "error_raw", "difference", "converged"]);
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.seed,
            r.n,
            fmt_f64(r.error_rounded),
            fmt_f64(r.error_raw),
            fmt_f64(r.difference),
            r.converged
        );
    }
    Ok(ExperimentResult {
        hybrid: rows,
        files: vec![("hybrid.csv".to_string(), csv)],
        ..Default::default()
    })
}

/// Dispatches on the configured mode.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match cfg.mode {
        Mode::Single => run_single(cfg),
        Mode::Replicated => run_replicated(cfg),
        Mode::Counterexample => run_counterexample(cfg),
        Mode::Hybrid => run_hybrid(cfg),
    }
}

pub fn diagnostic_settings(cfg: &ExperimentConfig) -> DiagnosticSettings {
    DiagnosticSettings {
        mc_samples: cfg.mc_samples,
        seed: cfg.seed,
        c3_points: cfg.c3_points.clone(),
        ..Default::default()
    }
}

/// Condition reports and their `conditions.csv` contents.
pub fn run_conditions(cfg: &ExperimentConfig) -> Result<(Vec<ConditionReport>, String)> {
    let reports = check_all(&cfg.model, &cfg.theta_star, &cfg.space, &diagnostic_settings(cfg))?;
    let csv = reports_csv(&reports);
    Ok((reports, csv))
}

/// Score diagnostics at θ* and their `score.csv` contents.
pub fn run_score(cfg: &ExperimentConfig) -> Result<(ScoreDiagnostics, String)> {
    let settings = ScoreSettings {
        n: cfg.score_n,
        replications: cfg.score_replications,
        nu: cfg.nu.clone(),
        seed: cfg.seed,
        ..Default::default()
    };
    let diag = score_diagnostics(&cfg.model, &cfg.theta_star, &cfg.space, &settings)?;
    let csv = diag.to_csv();
    Ok((diag, csv))
}
