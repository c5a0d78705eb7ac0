//! Parameter vectors, their block layout and the box-shaped parameter space.
//!
//! A parameter vector stores the emission block first and then, row by row,
//! the first K−1 entries of every transition row; the last entry of each row
//! is derived so that the row sums to one. For a two-state Poisson model this
//! gives `(λ₁, λ₂, P(1,1), P(2,1))`; for a two-state scalar Gaussian model
//! `(μ₁, μ₂, σ₁, σ₂, P(1,1), P(2,1))`.

use std::ops::Range;

use crate::error::{DhmmError, Result};
use crate::markov::TransitionMatrix;

pub const DEFAULT_EPS_P: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionFamily {
    /// One intensity per state.
    Poisson,
    /// One mean vector and one lower-triangular scale factor per state.
    Gaussian { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub family: EmissionFamily,
    pub states: usize,
}

impl Layout {
    pub fn poisson(states: usize) -> Self {
        Self {
            family: EmissionFamily::Poisson,
            states,
        }
    }

    pub fn gaussian(states: usize, dim: usize) -> Self {
        Self {
            family: EmissionFamily::Gaussian { dim },
            states,
        }
    }

    /// Number of stored entries of one lower-triangular factor.
    pub fn factor_len(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    pub fn emission_len(&self) -> usize {
        match self.family {
            EmissionFamily::Poisson => self.states,
            EmissionFamily::Gaussian { dim } => self.states * (dim + Self::factor_len(dim)),
        }
    }

    pub fn dimension(&self) -> usize {
        self.emission_len() + self.states * (self.states - 1)
    }

    pub fn emission_range(&self) -> Range<usize> {
        0..self.emission_len()
    }

    pub fn transition_range(&self) -> Range<usize> {
        self.emission_len()..self.dimension()
    }

    /// Index range of the Gaussian mean block (all states).
    pub fn means_range(&self) -> Range<usize> {
        match self.family {
            EmissionFamily::Poisson => 0..0,
            EmissionFamily::Gaussian { dim } => 0..self.states * dim,
        }
    }

    /// Index range of the Gaussian scale-factor block (all states).
    pub fn scales_range(&self) -> Range<usize> {
        match self.family {
            EmissionFamily::Poisson => 0..0,
            EmissionFamily::Gaussian { dim } => {
                self.states * dim..self.states * (dim + Self::factor_len(dim))
            }
        }
    }

    /// Positions inside a factor block that hold diagonal entries.
    pub fn factor_diagonal(dim: usize) -> impl Iterator<Item = usize> {
        (0..dim).map(|i| i * (i + 1) / 2 + i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.dimension() {
            return Err(DhmmError::LayoutMismatch {
                expected: layout.dimension(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DhmmError::InvalidParams(
                "parameter vector has a non-finite entry".into(),
            ));
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Derived last entry of every transition row.
    pub fn derived_row_entries(&self) -> Vec<f64> {
        let k = self.layout.states;
        let trans = &self.values[self.layout.transition_range()];
        (0..k)
            .map(|i| 1.0 - trans[i * (k - 1)..(i + 1) * (k - 1)].iter().sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    Poisson {
        rates: Vec<f64>,
    },
    Gaussian {
        dim: usize,
        means: Vec<Vec<f64>>,
        /// Row-major lower-triangular factors L with covariance L Lᵀ.
        factors: Vec<Vec<f64>>,
    },
}

/// Parameters in model-native form.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeParams {
    pub emission: Emission,
    pub transition: TransitionMatrix,
}

pub fn unpack(theta: &ParamVector) -> Result<NativeParams> {
    let layout = theta.layout;
    let k = layout.states;
    let v = &theta.values;
    let emission = match layout.family {
        EmissionFamily::Poisson => Emission::Poisson {
            rates: v[..k].to_vec(),
        },
        EmissionFamily::Gaussian { dim } => {
            let means = v[layout.means_range()]
                .chunks(dim)
                .map(<[f64]>::to_vec)
                .collect();
            let factors = v[layout.scales_range()]
                .chunks(Layout::factor_len(dim))
                .map(<[f64]>::to_vec)
                .collect();
            Emission::Gaussian {
                dim,
                means,
                factors,
            }
        }
    };
    let trans = &v[layout.transition_range()];
    let mut entries = Vec::with_capacity(k * k);
    for i in 0..k {
        let free = &trans[i * (k - 1)..(i + 1) * (k - 1)];
        entries.extend_from_slice(free);
        entries.push(1.0 - free.iter().sum::<f64>());
    }
    let transition = TransitionMatrix::new(k, entries)?;
    Ok(NativeParams {
        emission,
        transition,
    })
}

pub fn pack(native: &NativeParams, layout: Layout) -> Result<ParamVector> {
    let k = layout.states;
    if native.transition.states() != k {
        return Err(DhmmError::LayoutMismatch {
            expected: k,
            got: native.transition.states(),
        });
    }
    let mut values = Vec::with_capacity(layout.dimension());
    match (&native.emission, layout.family) {
        (Emission::Poisson { rates }, EmissionFamily::Poisson) if rates.len() == k => {
            values.extend_from_slice(rates);
        }
        (
            Emission::Gaussian {
                dim,
                means,
                factors,
            },
            EmissionFamily::Gaussian { dim: ldim },
        ) if *dim == ldim && means.len() == k && factors.len() == k => {
            for m in means {
                values.extend_from_slice(m);
            }
            for f in factors {
                values.extend_from_slice(f);
            }
        }
        _ => {
            return Err(DhmmError::LayoutMismatch {
                expected: layout.emission_len(),
                got: 0,
            })
        }
    }
    for i in 0..k {
        values.extend_from_slice(&native.transition.row(i)[..k - 1]);
    }
    ParamVector::new(layout, values)
}

/// Axis-aligned box Θ = [lower, upper] with a floor ε_P on every transition
/// probability, including the derived entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    layout: Layout,
    eps_p: f64,
}

impl ParamSpace {
    pub fn new(layout: Layout, lower: Vec<f64>, upper: Vec<f64>, eps_p: f64) -> Result<Self> {
        let d = layout.dimension();
        if lower.len() != d || upper.len() != d {
            return Err(DhmmError::LayoutMismatch {
                expected: d,
                got: lower.len().min(upper.len()),
            });
        }
        if !(0.0..0.5).contains(&eps_p) {
            return Err(DhmmError::InvalidParams(format!("eps_p = {eps_p}")));
        }
        for i in 0..d {
            if !(lower[i] <= upper[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(DhmmError::InvalidParams(format!(
                    "bad bounds [{}, {}] at coordinate {i}",
                    lower[i], upper[i]
                )));
            }
        }
        for i in layout.transition_range() {
            if lower[i] < eps_p || upper[i] > 1.0 - eps_p {
                return Err(DhmmError::InvalidParams(format!(
                    "transition bounds at coordinate {i} leave [eps_p, 1 - eps_p]"
                )));
            }
        }
        if let EmissionFamily::Gaussian { dim } = layout.family {
            let flen = Layout::factor_len(dim);
            for s in 0..layout.states {
                for pos in Layout::factor_diagonal(dim) {
                    let i = layout.scales_range().start + s * flen + pos;
                    if lower[i] <= 0.0 {
                        return Err(DhmmError::InvalidParams(format!(
                            "scale diagonal at coordinate {i} must be bounded away from zero"
                        )));
                    }
                }
            }
        }
        if layout.family == EmissionFamily::Poisson && lower[..layout.states].iter().any(|l| *l <= 0.0)
        {
            return Err(DhmmError::InvalidParams(
                "Poisson intensities must be bounded away from zero".into(),
            ));
        }
        Ok(Self {
            lower,
            upper,
            layout,
            eps_p,
        })
    }

    /// Default box: λ ∈ [0.1, 100] or μ ∈ [−20, 20], σ ∈ [0.05, 20],
    /// off-diagonal factor entries in [−20, 20], transition entries in [0.01, 0.99].
    pub fn default_for(layout: Layout) -> Self {
        let d = layout.dimension();
        let mut lower = vec![0.0; d];
        let mut upper = vec![0.0; d];
        match layout.family {
            EmissionFamily::Poisson => {
                for i in layout.emission_range() {
                    lower[i] = 0.1;
                    upper[i] = 100.0;
                }
            }
            EmissionFamily::Gaussian { dim } => {
                for i in layout.means_range() {
                    lower[i] = -20.0;
                    upper[i] = 20.0;
                }
                let flen = Layout::factor_len(dim);
                let start = layout.scales_range().start;
                for s in 0..layout.states {
                    for pos in 0..flen {
                        lower[start + s * flen + pos] = -20.0;
                        upper[start + s * flen + pos] = 20.0;
                    }
                    for pos in Layout::factor_diagonal(dim) {
                        lower[start + s * flen + pos] = 0.05;
                    }
                }
            }
        }
        for i in layout.transition_range() {
            lower[i] = 0.01;
            upper[i] = 0.99;
        }
        Self::new(layout, lower, upper, DEFAULT_EPS_P).expect("default box is valid")
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn eps_p(&self) -> f64 {
        self.eps_p
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dimension()
            && values
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Inside the box and every derived transition entry is at least ε_P.
    pub fn is_feasible(&self, values: &[f64]) -> bool {
        if !self.contains(values) {
            return false;
        }
        let k = self.layout.states;
        let trans = &values[self.layout.transition_range()];
        (0..k).all(|i| 1.0 - trans[i * (k - 1)..(i + 1) * (k - 1)].iter().sum::<f64>() >= self.eps_p)
    }

    pub fn project(&self, values: &mut [f64]) {
        for (v, (l, u)) in values.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Builds a parameter vector that lies in the box.
    pub fn point(&self, values: Vec<f64>) -> Result<ParamVector> {
        if !self.contains(&values) {
            return Err(DhmmError::InvalidParams(format!(
                "{values:?} lies outside the parameter box"
            )));
        }
        ParamVector::new(self.layout, values)
    }

    /// Shrinks transition rows whose derived entry falls below ε_P, then
    /// projects onto the box. Used to repair random start points.
    pub fn repair(&self, values: &mut [f64]) {
        self.project(values);
        let k = self.layout.states;
        let start = self.layout.transition_range().start;
        let target = 1.0 - 2.0 * self.eps_p.max(1e-9);
        for i in 0..k {
            let range = start + i * (k - 1)..start + (i + 1) * (k - 1);
            let lower = &self.lower[range.clone()];
            let row = &mut values[range];
            let sum: f64 = row.iter().sum();
            if 1.0 - sum >= self.eps_p {
                continue;
            }
            // take the excess out of each entry's room above its lower bound
            let excess = sum - target;
            let slack: f64 = row.iter().zip(lower).map(|(v, l)| v - l).sum();
            let shrink = if slack > 0.0 { (excess / slack).min(1.0) } else { 0.0 };
            for (v, l) in row.iter_mut().zip(lower) {
                *v -= shrink * (*v - l);
            }
        }
    }
}
