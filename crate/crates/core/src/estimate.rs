//! Quasi- and exact maximum-likelihood estimation over the parameter box,
//! canonical representatives of label-permuted parameters, and error traces
//! along a grid of sample sizes.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DhmmError, Result};
use crate::likelihood::{log_likelihood, LikelihoodKind};
use crate::num::fmt_f64;
use crate::markov::{stationary_distribution, Distribution};
use crate::models::{DhmModel, ObsSeq};
use crate::optim::{maximize, SimplexSettings};
use crate::params::{pack, unpack, Emission, NativeParams, ParamSpace, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Qmle,
    Mle,
}

impl EstimatorKind {
    pub fn likelihood(&self) -> LikelihoodKind {
        match self {
            EstimatorKind::Qmle => LikelihoodKind::Quasi,
            EstimatorKind::Mle => LikelihoodKind::Exact,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Qmle => "qmle",
            EstimatorKind::Mle => "mle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qmle" => Ok(EstimatorKind::Qmle),
            "mle" => Ok(EstimatorKind::Mle),
            other => Err(DhmmError::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Initial distribution used inside the likelihood, resolved per θ.
#[derive(Debug, Clone, PartialEq)]
pub enum NuSpec {
    /// Invariant law of P_θ.
    Stationary,
    Uniform,
    /// Counting measure (all-ones weights).
    Counting,
    Explicit(Vec<f64>),
}

impl NuSpec {
    pub fn resolve(&self, theta: &ParamVector) -> Result<Distribution> {
        let k = theta.layout().states;
        match self {
            NuSpec::Stationary => stationary_distribution(&unpack(theta)?.transition),
            NuSpec::Uniform => Ok(Distribution::uniform(k)),
            NuSpec::Counting => Ok(Distribution::counting(k)),
            NuSpec::Explicit(w) => {
                if w.len() != k {
                    return Err(DhmmError::DimensionMismatch(format!(
                        "explicit initial law over {} states for a {k}-state model",
                        w.len()
                    )));
                }
                Distribution::new(w.clone())
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "stationary" => Ok(NuSpec::Stationary),
            "uniform" => Ok(NuSpec::Uniform),
            "counting" => Ok(NuSpec::Counting),
            _ => s
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|e| DhmmError::Config(format!("initial law `{s}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(NuSpec::Explicit),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            NuSpec::Stationary => "stationary".into(),
            NuSpec::Uniform => "uniform".into(),
            NuSpec::Counting => "counting".into(),
            NuSpec::Explicit(w) => join(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    pub value_tol: f64,
    pub param_tol: f64,
    pub seed: u64,
    pub keep_trace: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iters: 2000,
            value_tol: 1e-9,
            param_tol: 1e-8,
            seed: 0,
            keep_trace: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(DhmmError::Config("n_starts must be at least 1".into()));
        }
        if !(self.value_tol > 0.0 && self.param_tol > 0.0) {
            return Err(DhmmError::Config("optimizer tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: EstimatorKind,
    pub theta_hat: ParamVector,
    pub log_lik: f64,
    pub starts: usize,
    pub best_start_index: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Final objective value reached from every start.
    pub start_values: Vec<f64>,
    pub trace: Option<Vec<(Vec<f64>, f64)>>,
}

/// Field names of the key-value record, in output order.
pub const FIT_RECORD_KEYS: [&str; 7] = [
    "kind",
    "theta_hat",
    "log_lik",
    "starts",
    "best_start_index",
    "iterations",
    "converged",
];

impl FitResult {
    /// Flat `key = value` record, one field per line.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind = {}", self.kind.name());
        let _ = writeln!(s, "theta_hat = {}", join(self.theta_hat.values()));
        let _ = writeln!(s, "log_lik = {}", fmt_f64(self.log_lik));
        let _ = writeln!(s, "starts = {}", self.starts);
        let _ = writeln!(s, "best_start_index = {}", self.best_start_index);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "converged = {}", self.converged);
        s
    }

    pub fn csv_header(dimension: usize) -> String {
        let mut cols: Vec<String> = FIT_RECORD_KEYS
            .iter()
            .filter(|k| **k != "theta_hat")
            .map(|k| k.to_string())
            .collect();
        cols.extend((1..=dimension).map(|i| format!("theta_{i}")));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.kind.name().to_string(),
            fmt_f64(self.log_lik),
            self.starts.to_string(),
            self.best_start_index.to_string(),
            self.iterations.to_string(),
            self.converged.to_string(),
        ];
        cols.extend(self.theta_hat.values().iter().map(|v| fmt_f64(*v)));
        cols.join(",")
    }
}

pub(crate) fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_f64(*v))
        .collect::<Vec<_>>()
        .join(",")
}

/// Likelihood at raw coordinates; −∞ outside the feasible set.
pub fn objective(
    kind: EstimatorKind,
    model: &DhmModel,
    obs: &ObsSeq,
    nu: &NuSpec,
    space: &ParamSpace,
    values: &[f64],
) -> Result<f64> {
    if !space.is_feasible(values) {
        return Ok(f64::NEG_INFINITY);
    }
    let theta = ParamVector::new(space.layout(), values.to_vec())?;
    let nu = match nu.resolve(&theta) {
        Ok(d) => d,
        Err(DhmmError::NonIrreducible) | Err(DhmmError::NumericalFailure(_)) => {
            return Ok(f64::NEG_INFINITY)
        }
        Err(e) => return Err(e),
    };
    match log_likelihood(kind.likelihood(), model, &theta, &nu, obs) {
        Ok(v) if v.is_nan() => Err(DhmmError::NonFinite {
            theta: values.to_vec(),
        }),
        Ok(v) => Ok(v),
        Err(DhmmError::NumericalFailure(_)) => Err(DhmmError::NonFinite {
            theta: values.to_vec(),
        }),
        Err(e) => Err(e),
    }
}

/// Box center followed by a Latin-hypercube sample of the box.
pub fn start_points(space: &ParamSpace, n_starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = space.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![space.center()];
    let m = n_starts.saturating_sub(1);
    if m > 0 {
        let columns: Vec<Vec<usize>> = (0..d)
            .map(|_| {
                let mut strata: Vec<usize> = (0..m).collect();
                strata.shuffle(&mut rng);
                strata
            })
            .collect();
        for j in 0..m {
            let point = (0..d)
                .map(|i| {
                    let u = (columns[i][j] as f64 + rng.random::<f64>()) / m as f64;
                    space.lower()[i] + u * (space.upper()[i] - space.lower()[i])
                })
                .collect();
            starts.push(point);
        }
    }
    for s in starts.iter_mut() {
        space.repair(s);
    }
    starts.truncate(n_starts.max(1));
    starts
}

pub fn fit(
    kind: EstimatorKind,
    model: &DhmModel,
    obs: &ObsSeq,
    nu: &NuSpec,
    space: &ParamSpace,
    cfg: &OptimizerConfig,
) -> Result<FitResult> {
    fit_with_starts(kind, model, obs, nu, space, cfg, &[])
}

/// As [`fit`], with `extra_starts` run after the configured starts.
pub fn fit_with_starts(
    kind: EstimatorKind,
    model: &DhmModel,
    obs: &ObsSeq,
    nu: &NuSpec,
    space: &ParamSpace,
    cfg: &OptimizerConfig,
    extra_starts: &[Vec<f64>],
) -> Result<FitResult> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(DhmmError::DimensionMismatch("empty observation sequence".into()));
    }
    if space.layout() != model.layout() {
        return Err(DhmmError::LayoutMismatch {
            expected: model.layout().dimension(),
            got: space.dimension(),
        });
    }
    let mut starts = start_points(space, cfg.n_starts, cfg.seed);
    for s in extra_starts {
        let mut s = s.clone();
        space.repair(&mut s);
        starts.push(s);
    }
    let settings = SimplexSettings {
        max_iters: cfg.max_iters,
        value_tol: cfg.value_tol,
        param_tol: cfg.param_tol,
        initial_step: 0.1,
        keep_trace: cfg.keep_trace,
    };

    let mut best: Option<(usize, ParamVector, crate::optim::SimplexOutcome)> = None;
    let mut start_values = Vec::with_capacity(starts.len());
    for (idx, start) in starts.iter().enumerate() {
        let run_settings = if idx >= cfg.n_starts {
            SimplexSettings {
                initial_step: 0.02,
                ..settings
            }
        } else {
            settings
        };
        let outcome = maximize(
            |x| objective(kind, model, obs, nu, space, x),
            start,
            space.lower(),
            space.upper(),
            &run_settings,
        )?;
        start_values.push(outcome.value);
        if outcome.value == f64::NEG_INFINITY {
            continue;
        }
        let canon = canonicalize(&ParamVector::new(space.layout(), outcome.x.clone())?)?;
        let better = match &best {
            None => true,
            Some((_, best_theta, best_out)) => match outcome.value.total_cmp(&best_out.value) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => lexicographic(canon.values(), best_theta.values()) == Ordering::Less,
            },
        };
        if better {
            best = Some((idx, canon, outcome));
        }
    }
    let (best_start_index, theta_hat, outcome) = best.ok_or(DhmmError::AllStartsFailed)?;
    Ok(FitResult {
        kind,
        theta_hat,
        log_lik: outcome.value,
        starts: starts.len(),
        best_start_index,
        iterations: outcome.iterations,
        converged: outcome.converged,
        start_values,
        trace: cfg.keep_trace.then_some(outcome.trace),
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// State order that sorts Poisson intensities, or Gaussian mean vectors
/// lexicographically, in ascending order.
pub fn canonical_permutation(theta: &ParamVector) -> Result<Vec<usize>> {
    let native = unpack(theta)?;
    let k = theta.layout().states;
    let mut perm: Vec<usize> = (0..k).collect();
    match &native.emission {
        Emission::Poisson { rates } => perm.sort_by(|&a, &b| rates[a].total_cmp(&rates[b])),
        Emission::Gaussian { means, .. } => perm.sort_by(|&a, &b| lexicographic(&means[a], &means[b])),
    }
    Ok(perm)
}

/// Relabels hidden states: new state i is old state perm[i].
pub fn permute_states(theta: &ParamVector, perm: &[usize]) -> Result<ParamVector> {
    let native = unpack(theta)?;
    let emission = match native.emission {
        Emission::Poisson { rates } => Emission::Poisson {
            rates: perm.iter().map(|&p| rates[p]).collect(),
        },
        Emission::Gaussian {
            dim,
            means,
            factors,
        } => Emission::Gaussian {
            dim,
            means: perm.iter().map(|&p| means[p].clone()).collect(),
            factors: perm.iter().map(|&p| factors[p].clone()).collect(),
        },
    };
    pack(
        &NativeParams {
            emission,
            transition: native.transition.permuted(perm),
        },
        theta.layout(),
    )
}

/// Representative of θ's label-permutation class.
pub fn canonicalize(theta: &ParamVector) -> Result<ParamVector> {
    let perm = canonical_permutation(theta)?;
    if perm.iter().enumerate().all(|(i, p)| i == *p) {
        return Ok(theta.clone());
    }
    permute_states(theta, &perm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub n: usize,
    /// ‖canon(θ̂_n) − canon(θ*)‖₂; NaN when the fit failed.
    pub error: f64,
    pub fit: std::result::Result<FitResult, DhmmError>,
}

/// Fits on every prefix `obs[..n]` for n in `grid`, warm-starting each fit from
/// the previous estimate, and reports the Euclidean error against θ*.
#[allow(clippy::too_many_arguments)]
pub fn error_trace(
    kind: EstimatorKind,
    model: &DhmModel,
    theta_star: &ParamVector,
    obs: &ObsSeq,
    grid: &[usize],
    nu: &NuSpec,
    space: &ParamSpace,
    cfg: &OptimizerConfig,
) -> Result<Vec<TracePoint>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid.first() == Some(&0) {
        return Err(DhmmError::InvalidParams("grid must be strictly ascending and positive".into()));
    }
    if grid.last().is_some_and(|&n| n > obs.len()) {
        return Err(DhmmError::InvalidParams(format!(
            "grid reaches {} but only {} observations are available",
            grid.last().unwrap(),
            obs.len()
        )));
    }
    let reference = canonicalize(theta_star)?;
    let mut warm: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(grid.len());
    for &n in grid {
        let prefix = obs.prefix(n);
        let extra: Vec<Vec<f64>> = warm.iter().cloned().collect();
        let fit = fit_with_starts(kind, model, &prefix, nu, space, cfg, &extra);
        let error = match &fit {
            Ok(f) => {
                warm = Some(f.theta_hat.values().to_vec());
                f.theta_hat.distance(&reference)
            }
            Err(_) => f64::NAN,
        };
        out.push(TracePoint { n, error, fit });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{log_p, log_q};
    use crate::models::NoiseSchedule;
    use crate::params::Layout;
    use crate::simulate::simulate;

    #[test]
    fn canonicalize_sorts_and_conjugates() {
        let theta = ParamVector::new(Layout::poisson(2), vec![20.0, 10.0, 0.9, 0.2]).unwrap();
        let canon = canonicalize(&theta).unwrap();
        // swapped rows [[0.9,0.1],[0.2,0.8]] → [[0.8,0.2],[0.1,0.9]]
        assert_eq!(canon.values()[..2], [10.0, 20.0]);
        assert!((canon.values()[2] - 0.8).abs() < 1e-15);
        assert!((canon.values()[3] - 0.1).abs() < 1e-15);
        assert_eq!(canonicalize(&canon).unwrap(), canon);

        let sorted = ParamVector::new(Layout::gaussian(2, 1), vec![0.0, 4.0, 0.5, 0.5, 0.4, 0.5]).unwrap();
        assert_eq!(canonicalize(&sorted).unwrap(), sorted);
    }

    #[test]
    fn canonicalize_preserves_likelihood() {
        let model = DhmModel::poisson(3, NoiseSchedule::new(5.0, 1.2, 0.0).unwrap()).unwrap();
        let theta = ParamVector::new(
            Layout::poisson(3),
            vec![30.0, 2.0, 11.0, 0.5, 0.3, 0.1, 0.6, 0.25, 0.25],
        )
        .unwrap();
        let traj = simulate(&model, &theta, None, 200, 8).unwrap();
        let canon = canonicalize(&theta).unwrap();
        for nu in [NuSpec::Stationary, NuSpec::Uniform] {
            let a = log_q(&model, &theta, &nu.resolve(&theta).unwrap(), &traj.y).unwrap();
            let b = log_q(&model, &canon, &nu.resolve(&canon).unwrap(), &traj.y).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            let a = log_p(&model, &theta, &nu.resolve(&theta).unwrap(), &traj.z).unwrap();
            let b = log_p(&model, &canon, &nu.resolve(&canon).unwrap(), &traj.z).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn latin_hypercube_starts_cover_strata() {
        let space = ParamSpace::default_for(Layout::poisson(2));
        let starts = start_points(&space, 9, 4);
        assert_eq!(starts.len(), 9);
        assert_eq!(starts[0], space.center());
        for i in 0..space.dimension() {
            let width = space.upper()[i] - space.lower()[i];
            let mut strata: Vec<usize> = starts[1..]
                .iter()
                .map(|s| (((s[i] - space.lower()[i]) / width) * 8.0).floor() as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
        assert_eq!(start_points(&space, 9, 4), starts);
    }

    #[test]
    fn one_state_gaussian_matches_closed_form() {
        let model = DhmModel::gaussian(1, 1, NoiseSchedule::zero()).unwrap();
        let theta = ParamVector::new(Layout::gaussian(1, 1), vec![0.0, 1.0]).unwrap();
        let traj = simulate(&model, &theta, None, 10_000, 21).unwrap();
        let z = traj.z.values();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let space = ParamSpace::default_for(model.layout());
        let fit = fit(
            EstimatorKind::Qmle,
            &model,
            &traj.z,
            &NuSpec::Uniform,
            &space,
            &OptimizerConfig::default(),
        )
        .unwrap();
        let est = fit.theta_hat.values();
        assert!((est[0] - 0.0).abs() < 0.05 && (est[1] - 1.0).abs() < 0.05);
        assert!((est[0] - mean).abs() < 1e-6 && (est[1] - sd).abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn one_state_poisson_matches_sample_mean() {
        let model = DhmModel::poisson(1, NoiseSchedule::zero()).unwrap();
        let theta = ParamVector::new(Layout::poisson(1), vec![7.0]).unwrap();
        let traj = simulate(&model, &theta, None, 3000, 5).unwrap();
        let mean = traj.z.values().iter().sum::<f64>() / 3000.0;
        let space = ParamSpace::default_for(model.layout());
        let fit = fit(
            EstimatorKind::Mle,
            &model,
            &traj.z,
            &NuSpec::Uniform,
            &space,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!((fit.theta_hat.values()[0] - mean).abs() < 1e-6 * mean);
    }

    #[test]
    fn fit_result_invariants() {
        let model = DhmModel::poisson(2, NoiseSchedule::new(40.0, 1.01, 0.0).unwrap()).unwrap();
        let theta = ParamVector::new(Layout::poisson(2), vec![10.0, 20.0, 0.8, 0.1]).unwrap();
        let traj = simulate(&model, &theta, None, 400, 2).unwrap();
        let space = ParamSpace::default_for(model.layout());
        let cfg = OptimizerConfig {
            n_starts: 4,
            keep_trace: true,
            ..Default::default()
        };
        for kind in [EstimatorKind::Qmle, EstimatorKind::Mle] {
            let fit = fit(kind, &model, &traj.z, &NuSpec::Stationary, &space, &cfg).unwrap();
            assert!(space.contains(fit.theta_hat.values()));
            assert!(fit.start_values.iter().all(|v| fit.log_lik >= *v));
            let nu = NuSpec::Stationary.resolve(&fit.theta_hat).unwrap();
            let again = log_likelihood(kind.likelihood(), &model, &fit.theta_hat, &nu, &traj.z).unwrap();
            assert!((again - fit.log_lik).abs() < 1e-9 * fit.log_lik.abs().max(1.0));
            assert_eq!(canonicalize(&fit.theta_hat).unwrap(), fit.theta_hat);
            assert!(fit.trace.as_ref().is_some_and(|t| !t.is_empty()));
            let rec = fit.to_record();
            for key in FIT_RECORD_KEYS {
                assert!(rec.contains(&format!("{key} = ")));
            }
            assert_eq!(
                FitResult::csv_header(4).split(',').count(),
                fit.csv_row().split(',').count()
            );
        }
    }

    #[test]
    fn zero_noise_estimators_agree() {
        let model = DhmModel::poisson(2, NoiseSchedule::zero()).unwrap();
        let theta = ParamVector::new(Layout::poisson(2), vec![10.0, 20.0, 0.8, 0.1]).unwrap();
        let traj = simulate(&model, &theta, None, 300, 6).unwrap();
        let space = ParamSpace::default_for(model.layout());
        let cfg = OptimizerConfig {
            n_starts: 3,
            ..Default::default()
        };
        let q = fit(EstimatorKind::Qmle, &model, &traj.z, &NuSpec::Uniform, &space, &cfg).unwrap();
        let p = fit(EstimatorKind::Mle, &model, &traj.z, &NuSpec::Uniform, &space, &cfg).unwrap();
        assert!((q.log_lik - p.log_lik).abs() < 1e-9);
        assert_eq!(q.theta_hat, p.theta_hat);
    }

    #[test]
    fn error_trace_basics() {
        let model = DhmModel::poisson(2, NoiseSchedule::zero()).unwrap();
        let theta = ParamVector::new(Layout::poisson(2), vec![10.0, 20.0, 0.8, 0.1]).unwrap();
        let traj = simulate(&model, &theta, None, 300, 6).unwrap();
        let space = ParamSpace::default_for(model.layout());
        let cfg = OptimizerConfig {
            n_starts: 3,
            ..Default::default()
        };
        let trace = error_trace(EstimatorKind::Qmle, &model, &theta, &traj.z, &[300], &NuSpec::Uniform, &space, &cfg)
            .unwrap();
        let direct = fit(EstimatorKind::Qmle, &model, &traj.z, &NuSpec::Uniform, &space, &cfg).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].error, direct.theta_hat.distance(&theta));

        // A box pinned at θ* forces θ̂ = θ*.
        let v = theta.values().to_vec();
        let pinned = ParamSpace::new(model.layout(), v.clone(), v, 1e-6).unwrap();
        let trace = error_trace(EstimatorKind::Mle, &model, &theta, &traj.z, &[50, 100, 300], &NuSpec::Uniform, &pinned, &cfg)
            .unwrap();
        assert!(trace.iter().all(|p| p.error == 0.0));

        assert!(error_trace(EstimatorKind::Mle, &model, &theta, &traj.z, &[100, 50], &NuSpec::Uniform, &space, &cfg).is_err());
        assert!(error_trace(EstimatorKind::Mle, &model, &theta, &traj.z, &[400], &NuSpec::Uniform, &space, &cfg).is_err());
    }

    #[test]
    fn nu_spec_parsing() {
        assert_eq!(NuSpec::parse("stationary").unwrap(), NuSpec::Stationary);
        assert_eq!(NuSpec::parse(" 0.25, 0.75").unwrap(), NuSpec::Explicit(vec![0.25, 0.75]));
        assert!(NuSpec::parse("zz").is_err());
    }
}
