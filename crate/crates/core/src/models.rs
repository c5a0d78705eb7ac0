//! Model families: the stationary emission density f_θ(s, ·), the
//! inhomogeneous observation density f_{θ,n}(s, ·) and the noise schedule β_n.
//!
//! | kind           | Y given X = s         | Z_n given X_n = s                      |
//! |----------------|-----------------------|----------------------------------------|
//! | Poisson        | Poi(λ_s)              | Poi(λ_s + β_n)                         |
//! | Gaussian       | N(μ_s, Σ_s Σ_sᵀ)      | N(μ_s, Σ_s Σ_sᵀ + β_n² I)              |
//! | Hybrid         | Poi(λ_s)              | Σ_j Poi(λ_s)(j) · N(j, β_n²)           |
//! | Counterexample | N(μ, σ²), one state   | N(μ, σ² + β_n²) with β_n → β_∞ > 0     |
//!
//! Everything is evaluated in the log domain.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{Continuous, Discrete, Normal, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::error::{DhmmError, Result};
use crate::params::{unpack, Emission, Layout, NativeParams, ParamVector};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// β_n = floor + scale · n^(−exponent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    scale: f64,
    exponent: f64,
    floor: f64,
}

impl NoiseSchedule {
    pub fn new(scale: f64, exponent: f64, floor: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(DhmmError::InvalidParams(format!("schedule scale {scale}")));
        }
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(DhmmError::InvalidParams(format!("schedule floor {floor}")));
        }
        if scale > 0.0 && !(exponent > 0.0 && exponent.is_finite()) {
            return Err(DhmmError::InvalidParams(format!(
                "schedule exponent {exponent} must be positive"
            )));
        }
        Ok(Self {
            scale,
            exponent,
            floor,
        })
    }

    /// β_n ≡ 0.
    pub fn zero() -> Self {
        Self {
            scale: 0.0,
            exponent: 1.0,
            floor: 0.0,
        }
    }

    /// β_n ≡ floor.
    pub fn constant(floor: f64) -> Result<Self> {
        Self::new(0.0, 1.0, floor)
    }

    #[inline]
    pub fn beta(&self, n: usize) -> f64 {
        debug_assert!(n >= 1);
        if self.scale == 0.0 {
            self.floor
        } else {
            self.floor + self.scale * (n as f64).powf(-self.exponent)
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn is_vanishing(&self) -> bool {
        self.floor == 0.0
    }

    pub fn is_zero(&self) -> bool {
        self.floor == 0.0 && self.scale == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Poisson,
    Gaussian,
    Hybrid,
    Counterexample,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Poisson => "poisson",
            ModelKind::Gaussian => "gaussian",
            ModelKind::Hybrid => "hybrid",
            ModelKind::Counterexample => "counterexample",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(ModelKind::Poisson),
            "gaussian" => Ok(ModelKind::Gaussian),
            "hybrid" => Ok(ModelKind::Hybrid),
            "counterexample" => Ok(ModelKind::Counterexample),
            other => Err(DhmmError::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsSpace {
    /// Nonnegative integers.
    Counts,
    /// R^dim.
    Reals { dim: usize },
}

impl ObsSpace {
    pub fn dim(&self) -> usize {
        match self {
            ObsSpace::Counts => 1,
            ObsSpace::Reals { dim } => *dim,
        }
    }

    pub fn check(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.dim() {
            return Err(DhmmError::DimensionMismatch(format!(
                "observation of length {} in a space of dimension {}",
                obs.len(),
                self.dim()
            )));
        }
        match self {
            ObsSpace::Counts => {
                let y = obs[0];
                if !(y.is_finite() && y >= 0.0 && y.fract() == 0.0) {
                    return Err(DhmmError::DomainError(format!("{y} is not a count")));
                }
            }
            ObsSpace::Reals { .. } => {
                if obs.iter().any(|v| !v.is_finite()) {
                    return Err(DhmmError::DomainError("non-finite observation".into()));
                }
            }
        }
        Ok(())
    }
}

/// Sequence of observations of a fixed dimension, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsSeq {
    dim: usize,
    values: Vec<f64>,
}

impl ObsSeq {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(DhmmError::DimensionMismatch(format!(
                "{} values do not split into observations of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn scalar(values: Vec<f64>) -> Self {
        Self { dim: 1, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> std::slice::Chunks<'_, f64> {
        self.values.chunks(self.dim)
    }

    pub fn prefix(&self, n: usize) -> ObsSeq {
        let n = n.min(self.len());
        Self {
            dim: self.dim,
            values: self.values[..n * self.dim].to_vec(),
        }
    }

    pub fn push(&mut self, obs: &[f64]) {
        assert_eq!(obs.len(), self.dim);
        self.values.extend_from_slice(obs);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhmModel {
    kind: ModelKind,
    states: usize,
    dim: usize,
    schedule: NoiseSchedule,
}

impl DhmModel {
    pub fn new(kind: ModelKind, states: usize, dim: usize, schedule: NoiseSchedule) -> Result<Self> {
        if states == 0 || dim == 0 {
            return Err(DhmmError::InvalidParams(
                "state count and observation dimension must be positive".into(),
            ));
        }
        match kind {
            ModelKind::Poisson | ModelKind::Hybrid if dim != 1 => {
                return Err(DhmmError::InvalidParams(
                    "count models have scalar observations".into(),
                ))
            }
            ModelKind::Counterexample if states != 1 || dim != 1 => {
                return Err(DhmmError::InvalidParams(
                    "the counterexample model has one state and scalar observations".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            states,
            dim,
            schedule,
        })
    }

    pub fn poisson(states: usize, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(ModelKind::Poisson, states, 1, schedule)
    }

    pub fn gaussian(states: usize, dim: usize, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(ModelKind::Gaussian, states, dim, schedule)
    }

    pub fn hybrid(states: usize, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(ModelKind::Hybrid, states, 1, schedule)
    }

    pub fn counterexample(floor: f64) -> Result<Self> {
        Self::new(ModelKind::Counterexample, 1, 1, NoiseSchedule::constant(floor)?)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn with_schedule(&self, schedule: NoiseSchedule) -> Self {
        Self {
            schedule,
            ..self.clone()
        }
    }

    pub fn is_count_emission(&self) -> bool {
        matches!(self.kind, ModelKind::Poisson | ModelKind::Hybrid)
    }

    pub fn layout(&self) -> Layout {
        if self.is_count_emission() {
            Layout::poisson(self.states)
        } else {
            Layout::gaussian(self.states, self.dim)
        }
    }

    /// Space of the hidden homogeneous emissions Y.
    pub fn y_space(&self) -> ObsSpace {
        if self.is_count_emission() {
            ObsSpace::Counts
        } else {
            ObsSpace::Reals { dim: self.dim }
        }
    }

    /// Space of the observed inhomogeneous sequence Z.
    pub fn z_space(&self) -> ObsSpace {
        match self.kind {
            ModelKind::Poisson => ObsSpace::Counts,
            _ => ObsSpace::Reals { dim: self.dim },
        }
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<NativeParams> {
        if theta.layout() != self.layout() {
            return Err(DhmmError::LayoutMismatch {
                expected: self.layout().dimension(),
                got: theta.len(),
            });
        }
        let native = unpack(theta)?;
        validate_emission(&native.emission)?;
        Ok(native)
    }

    /// Prepares per-state constants for repeated density evaluation.
    pub fn kernel(&self, theta: &ParamVector) -> Result<DensityKernel<'_>> {
        let native = self.check_theta(theta)?;
        DensityKernel::new(self, &native)
    }

    /// log f_θ(s, y).
    pub fn log_f(&self, theta: &ParamVector, state: usize, y: &[f64]) -> Result<f64> {
        let native = self.check_theta(theta)?;
        self.y_space().check(y)?;
        self.check_state(state)?;
        Ok(match &native.emission {
            Emission::Poisson { rates } => poisson_ln_pmf(rates[state], y[0]),
            Emission::Gaussian { dim, means, factors } => {
                gaussian_log_density(&means[state], &factors[state], *dim, 0.0, y)?
            }
        })
    }

    /// log f_{θ,n}(s, z).
    pub fn log_f_n(&self, theta: &ParamVector, state: usize, n: usize, z: &[f64]) -> Result<f64> {
        if n == 0 {
            return Err(DhmmError::InvalidParams("time index starts at 1".into()));
        }
        let native = self.check_theta(theta)?;
        self.z_space().check(z)?;
        self.check_state(state)?;
        let beta = self.schedule.beta(n);
        Ok(match (&native.emission, self.kind) {
            (Emission::Poisson { rates }, ModelKind::Poisson) => {
                poisson_ln_pmf(rates[state] + beta, z[0])
            }
            (Emission::Poisson { rates }, _) => hybrid_log_density(rates[state], beta, z[0], 0)?,
            (Emission::Gaussian { dim, means, factors }, _) => {
                gaussian_log_density(&means[state], &factors[state], *dim, beta, z)?
            }
        })
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.states {
            return Err(DhmmError::DimensionMismatch(format!(
                "state {state} of a {}-state model",
                self.states
            )));
        }
        Ok(())
    }
}

fn validate_emission(emission: &Emission) -> Result<()> {
    match emission {
        Emission::Poisson { rates } => {
            if rates.iter().any(|r| !(*r > 0.0)) {
                return Err(DhmmError::InvalidParams(
                    "Poisson intensities must be positive".into(),
                ));
            }
        }
        Emission::Gaussian { dim, factors, .. } => {
            for f in factors {
                if Layout::factor_diagonal(*dim).any(|i| !(f[i] > 0.0)) {
                    return Err(DhmmError::InvalidParams(
                        "scale factors need a positive diagonal".into(),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Poisson log-pmf via statrs; the count must already be validated.
fn poisson_ln_pmf(mean: f64, count: f64) -> f64 {
    let dist = Poisson::new(mean).expect("positive Poisson mean");
    dist.ln_pmf(count as u64)
}

fn lower_factor(dim: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(dim, dim);
    let mut idx = 0;
    for i in 0..dim {
        for j in 0..=i {
            l[(i, j)] = packed[idx];
            idx += 1;
        }
    }
    l
}

fn covariance(dim: usize, packed: &[f64], beta: f64) -> DMatrix<f64> {
    let l = lower_factor(dim, packed);
    let mut cov = &l * l.transpose();
    for i in 0..dim {
        cov[(i, i)] += beta * beta;
    }
    cov
}

fn mvn_log_density(mean: &[f64], cov: &DMatrix<f64>, z: &[f64]) -> Result<f64> {
    let dim = mean.len();
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| DhmmError::NumericalFailure("covariance is not positive definite".into()))?;
    let diff = DVector::from_iterator(dim, z.iter().zip(mean).map(|(a, b)| a - b));
    let solved = chol.l().solve_lower_triangular(&diff).expect("triangular solve");
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (dim as f64 * LN_2PI + log_det + solved.norm_squared()))
}

fn gaussian_log_density(mean: &[f64], factor: &[f64], dim: usize, beta: f64, z: &[f64]) -> Result<f64> {
    if dim == 1 {
        let sd = (factor[0] * factor[0] + beta * beta).sqrt();
        let normal = Normal::new(mean[0], sd)
            .map_err(|e| DhmmError::InvalidParams(e.to_string()))?;
        Ok(normal.ln_pdf(z[0]))
    } else {
        mvn_log_density(mean, &covariance(dim, factor, beta), z)
    }
}

/// log Σ_j Poi(rate)(j) · N(z; j, β²), truncated to
/// j ∈ [max(0, ⌈z⌉ − J), ⌈z⌉ + J] ∪ [0, rate + 10√rate] with J = ⌈10β⌉ + 20 + `extra`.
///
/// With β = 0 the observation is a count and the density is the Poisson pmf.
pub fn hybrid_log_density(rate: f64, beta: f64, z: f64, extra: usize) -> Result<f64> {
    if !z.is_finite() {
        return Err(DhmmError::DomainError("non-finite observation".into()));
    }
    if beta == 0.0 {
        ObsSpace::Counts.check(&[z])?;
        return Ok(poisson_ln_pmf(rate, z));
    }
    let radius = (10.0 * beta).ceil() as i64 + 20 + extra as i64;
    let zc = z.ceil() as i64;
    let near = ((zc - radius).max(0), zc + radius);
    let bulk = (0i64, (rate + 10.0 * rate.sqrt()).ceil() as i64 + extra as i64);
    let mut intervals = vec![bulk];
    if near.1 >= near.0 {
        intervals.push(near);
    }
    intervals.sort();
    let mut merged: Vec<(i64, i64)> = Vec::new();
    for (lo, hi) in intervals {
        match merged.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let ln_rate = rate.ln();
    let inv_var = 1.0 / (beta * beta);
    let norm = -0.5 * (LN_2PI + 2.0 * beta.ln());
    let term = |j: i64| {
        let jf = j as f64;
        let d = z - jf;
        jf * ln_rate - rate - ln_gamma(jf + 1.0) + norm - 0.5 * d * d * inv_var
    };
    let max = merged
        .iter()
        .flat_map(|&(lo, hi)| lo..=hi)
        .map(term)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = merged
        .iter()
        .flat_map(|&(lo, hi)| lo..=hi)
        .map(|j| (term(j) - max).exp())
        .sum();
    Ok(max + sum.ln())
}

enum KernelEmission {
    Poisson { rates: Vec<f64>, ln_rates: Vec<f64> },
    Scalar { means: Vec<f64>, vars: Vec<f64>, norms: Vec<f64> },
    Vector { dim: usize, means: Vec<Vec<f64>>, factors: Vec<Vec<f64>> },
}

/// Row-at-a-time log densities for all states, with per-state constants
/// computed once. This is the fast path used by the forward recursion.
pub struct DensityKernel<'m> {
    model: &'m DhmModel,
    emission: KernelEmission,
}

impl<'m> DensityKernel<'m> {
    fn new(model: &'m DhmModel, native: &NativeParams) -> Result<Self> {
        let emission = match &native.emission {
            Emission::Poisson { rates } => KernelEmission::Poisson {
                ln_rates: rates.iter().map(|r| r.ln()).collect(),
                rates: rates.clone(),
            },
            Emission::Gaussian { dim: 1, means, factors } => KernelEmission::Scalar {
                means: means.iter().map(|m| m[0]).collect(),
                vars: factors.iter().map(|f| f[0] * f[0]).collect(),
                norms: factors.iter().map(|f| -0.5 * LN_2PI - f[0].abs().ln()).collect(),
            },
            Emission::Gaussian { dim, means, factors } => KernelEmission::Vector {
                dim: *dim,
                means: means.clone(),
                factors: factors.clone(),
            },
        };
        Ok(Self { model, emission })
    }

    pub fn model(&self) -> &DhmModel {
        self.model
    }

    /// out[s] = log f_θ(s, y).
    pub fn log_f_row(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.model.y_space().check(y)?;
        self.row(0.0, y, out, false)
    }

    /// out[s] = log f_{θ,n}(s, z).
    pub fn log_f_n_row(&self, n: usize, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.model.z_space().check(z)?;
        let beta = self.model.schedule.beta(n);
        let hybrid = self.model.kind == ModelKind::Hybrid;
        self.row(beta, z, out, hybrid)
    }

    fn row(&self, beta: f64, obs: &[f64], out: &mut [f64], hybrid: bool) -> Result<()> {
        match &self.emission {
            KernelEmission::Poisson { rates, ln_rates } => {
                let z = obs[0];
                if hybrid && (beta > 0.0 || z.fract() != 0.0) {
                    for (o, r) in out.iter_mut().zip(rates) {
                        *o = hybrid_log_density(*r, beta, z, 0)?;
                    }
                } else if z == 0.0 {
                    for (o, r) in out.iter_mut().zip(rates) {
                        *o = -(r + beta);
                    }
                } else {
                    let lg = ln_gamma(z + 1.0);
                    if beta == 0.0 {
                        for ((o, r), lr) in out.iter_mut().zip(rates).zip(ln_rates) {
                            *o = z * lr - r - lg;
                        }
                    } else {
                        for (o, r) in out.iter_mut().zip(rates) {
                            let m = r + beta;
                            *o = z * m.ln() - m - lg;
                        }
                    }
                }
            }
            KernelEmission::Scalar { means, vars, norms } => {
                let z = obs[0];
                let b2 = beta * beta;
                if b2 == 0.0 {
                    for (((o, m), v), c) in out.iter_mut().zip(means).zip(vars).zip(norms) {
                        let d = z - m;
                        *o = c - 0.5 * d * d / v;
                    }
                    return Ok(());
                }
                for ((o, m), v) in out.iter_mut().zip(means).zip(vars) {
                    let var = v + b2;
                    let d = z - m;
                    *o = -0.5 * (LN_2PI + var.ln() + d * d / var);
                }
            }
            KernelEmission::Vector { dim, means, factors } => {
                for ((o, m), f) in out.iter_mut().zip(means).zip(factors) {
                    *o = mvn_log_density(m, &covariance(*dim, f, beta), obs)?;
                }
            }
        }
        Ok(())
    }
}

/// Nearest natural number, ⌊z + 0.5⌋, clamped at zero.
pub fn round_transform(z: f64) -> u64 {
    let r = (z + 0.5).floor();
    if r <= 0.0 || !r.is_finite() {
        0
    } else {
        r as u64
    }
}

pub fn round_sequence(z: &ObsSeq) -> ObsSeq {
    ObsSeq::scalar(z.values().iter().map(|v| round_transform(*v) as f64).collect())
}

/// a_n = max_s (β_n + λ_s) / λ_s.
pub fn ratio_bound_constant(model: &DhmModel, theta: &ParamVector, n: usize) -> Result<f64> {
    if model.kind() != ModelKind::Poisson {
        return Err(DhmmError::WrongModelKind {
            expected: "poisson",
            got: model.kind().name(),
        });
    }
    let native = model.check_theta(theta)?;
    let beta = model.schedule().beta(n);
    match native.emission {
        Emission::Poisson { rates } => Ok(rates
            .iter()
            .map(|l| (beta + l) / l)
            .fold(f64::NEG_INFINITY, f64::max)),
        Emission::Gaussian { .. } => unreachable!("count model with Gaussian layout"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poisson_theta(rates: &[f64]) -> ParamVector {
        let k = rates.len();
        let mut v = rates.to_vec();
        for _ in 0..k {
            v.extend(std::iter::repeat(1.0 / k as f64).take(k - 1));
        }
        ParamVector::new(Layout::poisson(k), v).unwrap()
    }

    fn scalar_gaussian_theta(means: &[f64], sds: &[f64]) -> ParamVector {
        let k = means.len();
        let mut v = means.to_vec();
        v.extend_from_slice(sds);
        for _ in 0..k {
            v.extend(std::iter::repeat(1.0 / k as f64).take(k - 1));
        }
        ParamVector::new(Layout::gaussian(k, 1), v).unwrap()
    }

    // Independent oracle: pmf via an explicit product, then logged.
    fn poisson_pmf_oracle(mean: f64, y: u32) -> f64 {
        let mut p = (-mean).exp();
        for j in 1..=y {
            p *= mean / j as f64;
        }
        p.ln()
    }

    #[test]
    fn poisson_log_pmf_values() {
        let model = DhmModel::poisson(2, NoiseSchedule::zero()).unwrap();
        let theta = poisson_theta(&[10.0, 20.0]);
        let v = model.log_f(&theta, 0, &[10.0]).unwrap();
        assert!((v - poisson_pmf_oracle(10.0, 10)).abs() < 1e-12);
        assert!((v - (-2.078_562_757_742_51)).abs() < 1e-5);
        assert_eq!(model.log_f(&theta, 1, &[0.0]).unwrap(), -20.0);
        assert!(matches!(
            model.log_f(&theta, 0, &[-1.0]),
            Err(DhmmError::DomainError(_))
        ));
        assert!(matches!(
            model.log_f(&theta, 0, &[1.5]),
            Err(DhmmError::DomainError(_))
        ));
    }

    #[test]
    fn gaussian_log_density_values() {
        let model = DhmModel::gaussian(1, 1, NoiseSchedule::constant(1.0).unwrap()).unwrap();
        let theta = scalar_gaussian_theta(&[0.0], &[1.0]);
        let v = model.log_f(&theta, 0, &[0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        let v = model.log_f_n(&theta, 0, 1, &[0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI * 2.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn poisson_inhomogeneous_values() {
        let sched = NoiseSchedule::new(40.0, 1.01, 0.0).unwrap();
        let model = DhmModel::poisson(2, sched).unwrap();
        let theta = poisson_theta(&[10.0, 20.0]);
        assert_eq!(model.log_f_n(&theta, 0, 1, &[0.0]).unwrap(), -50.0);

        let zero = model.with_schedule(NoiseSchedule::zero());
        for z in [0.0, 3.0, 10.0, 41.0] {
            assert_eq!(
                zero.log_f_n(&theta, 0, 7, &[z]).unwrap(),
                zero.log_f(&theta, 0, &[z]).unwrap()
            );
        }
    }

    #[test]
    fn kernel_rows_match_single_state_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sched = NoiseSchedule::new(3.0, 0.8, 0.0).unwrap();
        let cases = vec![
            (DhmModel::poisson(3, sched).unwrap(), poisson_theta(&[1.5, 7.0, 22.0])),
            (DhmModel::hybrid(2, sched).unwrap(), poisson_theta(&[4.0, 9.0])),
            (
                DhmModel::gaussian(2, 1, sched).unwrap(),
                scalar_gaussian_theta(&[-1.0, 2.0], &[0.7, 1.3]),
            ),
            (
                DhmModel::gaussian(2, 2, sched).unwrap(),
                ParamVector::new(
                    Layout::gaussian(2, 2),
                    vec![0.0, 1.0, 2.0, -1.0, 1.0, 0.3, 0.8, 0.5, -0.2, 1.2, 0.6, 0.3],
                )
                .unwrap(),
            ),
        ];
        for (model, theta) in cases {
            let kernel = model.kernel(&theta).unwrap();
            let k = model.states();
            let mut row = vec![0.0; k];
            for _ in 0..20 {
                let n = rng.random_range(1..50);
                let obs: Vec<f64> = match model.y_space() {
                    ObsSpace::Counts => vec![rng.random_range(0..30) as f64],
                    ObsSpace::Reals { dim } => (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect(),
                };
                kernel.log_f_row(&obs, &mut row).unwrap();
                for s in 0..k {
                    let single = model.log_f(&theta, s, &obs).unwrap();
                    assert!((row[s] - single).abs() < 1e-10 * (1.0 + single.abs()));
                }
                kernel.log_f_n_row(n, &obs, &mut row).unwrap();
                for s in 0..k {
                    let single = model.log_f_n(&theta, s, n, &obs).unwrap();
                    assert!((row[s] - single).abs() < 1e-10 * (1.0 + single.abs()));
                }
            }
        }
    }

    #[test]
    fn densities_normalize() {
        let sched = NoiseSchedule::new(2.0, 0.5, 0.0).unwrap();
        let model = DhmModel::poisson(2, sched).unwrap();
        let theta = poisson_theta(&[3.0, 25.0]);
        for s in 0..2 {
            for n in [1usize, 4, 100] {
                let beta = sched.beta(n);
                let mean = [3.0, 25.0][s] + beta;
                let upper = (mean + 20.0 * mean.sqrt()).ceil() as usize;
                let total: f64 = (0..=upper)
                    .map(|z| model.log_f_n(&theta, s, n, &[z as f64]).unwrap().exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-6);
                let total: f64 = (0..=upper)
                    .map(|z| model.log_f(&theta, s, &[z as f64]).unwrap().exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-6);
            }
        }

        let model = DhmModel::gaussian(2, 1, sched).unwrap();
        let theta = scalar_gaussian_theta(&[-1.0, 3.0], &[0.5, 2.0]);
        for s in 0..2 {
            for n in [1usize, 9] {
                let sd = ([0.5f64, 2.0][s].powi(2) + sched.beta(n).powi(2)).sqrt();
                let mu = [-1.0, 3.0][s];
                let (a, b, steps) = (mu - 10.0 * sd, mu + 10.0 * sd, 20_000);
                let h = (b - a) / steps as f64;
                let total: f64 = (0..=steps)
                    .map(|i| {
                        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                        w * model
                            .log_f_n(&theta, s, n, &[a + i as f64 * h])
                            .unwrap()
                            .exp()
                    })
                    .sum::<f64>()
                    * h;
                assert!((total - 1.0).abs() < 1e-6, "{total}");
            }
        }

        // Hybrid mixture: integrate the continuous density over the real line.
        let model = DhmModel::hybrid(1, NoiseSchedule::constant(0.3).unwrap()).unwrap();
        let theta = poisson_theta(&[4.0]);
        let (a, b, steps) = (-5.0, 40.0, 45_000);
        let h = (b - a) / steps as f64;
        let total: f64 = (0..=steps)
            .map(|i| {
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                w * model.log_f_n(&theta, 0, 1, &[a + i as f64 * h]).unwrap().exp()
            })
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn poisson_convolution_identity() {
        let (lambda, beta) = (7.5, 1.3);
        let trunc = 120;
        let pmf = |m: f64, k: usize| poisson_pmf_oracle(m, k as u32).exp();
        let sched = NoiseSchedule::constant(beta).unwrap();
        let model = DhmModel::poisson(1, sched).unwrap();
        let theta = poisson_theta(&[lambda]);
        for z in 0..60 {
            let conv: f64 = (0..=z.min(trunc)).map(|y| pmf(lambda, y) * pmf(beta, z - y)).sum();
            let direct = model.log_f_n(&theta, 0, 1, &[z as f64]).unwrap().exp();
            assert!((conv - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn inhomogeneous_density_approaches_stationary() {
        let sched = NoiseSchedule::new(10.0, 0.75, 0.0).unwrap();
        let model = DhmModel::gaussian(2, 1, sched).unwrap();
        let theta = scalar_gaussian_theta(&[0.0, 4.0], &[0.5, 0.5]);
        // Within one σ of the mean the gap has a fixed sign for every β.
        let z = [0.3];
        let target = model.log_f(&theta, 0, &z).unwrap();
        let mut prev = f64::INFINITY;
        for n in [10usize, 100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000, 100_000_000] {
            let gap = (model.log_f_n(&theta, 0, n, &z).unwrap() - target).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-6);

        let sched = NoiseSchedule::new(40.0, 1.01, 0.0).unwrap();
        let model = DhmModel::poisson(2, sched).unwrap();
        let theta = poisson_theta(&[10.0, 20.0]);
        let target = model.log_f(&theta, 1, &[17.0]).unwrap();
        let gap = (model.log_f_n(&theta, 1, 100_000_000, &[17.0]).unwrap() - target).abs();
        assert!(gap < 1e-6);
    }

    #[test]
    fn hybrid_truncation_is_converged() {
        for &(rate, beta, z) in &[(10.0, 0.5, 9.7), (20.0, 3.0, 31.2), (0.5, 1.0, -2.0), (50.0, 0.05, 49.49)] {
            let base = hybrid_log_density(rate, beta, z, 0).unwrap();
            let wider = hybrid_log_density(rate, beta, z, 10).unwrap();
            assert!((base - wider).abs() < 1e-12);
        }
        assert!(hybrid_log_density(3.0, 0.0, 2.5, 0).is_err());
    }

    #[test]
    fn rounding() {
        assert_eq!(round_transform(3.4), 3);
        assert_eq!(round_transform(3.5), 4);
        assert_eq!(round_transform(-0.7), 0);
        assert_eq!(round_transform(-0.3), 0);
        assert_eq!(round_transform(12.0), 12);
    }

    #[test]
    fn ratio_bound() {
        let model = DhmModel::poisson(2, NoiseSchedule::constant(40.0).unwrap()).unwrap();
        let theta = poisson_theta(&[10.0, 20.0]);
        assert_eq!(ratio_bound_constant(&model, &theta, 1).unwrap(), 5.0);
        let zero = model.with_schedule(NoiseSchedule::zero());
        assert_eq!(ratio_bound_constant(&zero, &theta, 3).unwrap(), 1.0);
        let decaying = model.with_schedule(NoiseSchedule::new(40.0, 1.01, 0.0).unwrap());
        let mut prev = f64::INFINITY;
        for n in [1usize, 10, 100, 1000, 100_000] {
            let a = ratio_bound_constant(&decaying, &theta, n).unwrap();
            assert!(a < prev && a > 1.0);
            prev = a;
        }
        let gauss = DhmModel::gaussian(1, 1, NoiseSchedule::zero()).unwrap();
        assert!(matches!(
            ratio_bound_constant(&gauss, &scalar_gaussian_theta(&[0.0], &[1.0]), 1),
            Err(DhmmError::WrongModelKind { .. })
        ));
    }
}
