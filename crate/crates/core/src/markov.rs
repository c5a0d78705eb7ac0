//! Finite-state Markov chain primitives: row-stochastic transition matrices,
//! distributions over the state space, irreducibility and the invariant law.

use nalgebra::{DMatrix, DVector};

use crate::error::{DhmmError, Result};

/// Row-sum tolerance for a transition matrix or a probability vector.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// K×K row-stochastic matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    states: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(states: usize, entries: Vec<f64>) -> Result<Self> {
        if states == 0 || entries.len() != states * states {
            return Err(DhmmError::DimensionMismatch(format!(
                "{} entries for a {states}x{states} transition matrix",
                entries.len()
            )));
        }
        for (row_idx, row) in entries.chunks(states).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(DhmmError::InvalidParams(format!(
                    "row {row_idx} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(DhmmError::InvalidParams(format!(
                    "row {row_idx} sums to {sum}"
                )));
            }
        }
        Ok(Self { states, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let mut entries = Vec::with_capacity(k * k);
        for row in rows {
            if row.len() != k {
                return Err(DhmmError::DimensionMismatch(format!(
                    "row of length {} in a {k}-state matrix",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::new(k, entries)
    }

    pub fn identity(states: usize) -> Self {
        let mut entries = vec![0.0; states * states];
        for i in 0..states {
            entries[i * states + i] = 1.0;
        }
        Self { states, entries }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.states + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.entries[from * self.states..(from + 1) * self.states]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Relabels states: entry (i, j) of the result is entry (perm[i], perm[j]) of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.states;
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                entries[i * k + j] = self.get(perm[i], perm[j]);
            }
        }
        Self { states: k, entries }
    }

    /// Row vector times matrix.
    pub fn left_apply(&self, weights: &[f64]) -> Vec<f64> {
        let k = self.states;
        let mut out = vec![0.0; k];
        for (i, w) in weights.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * self.entries[i * k + j];
            }
        }
        out
    }
}

/// Weights over the state space. A counting measure (all ones, unnormalized)
/// is allowed through [`Distribution::counting`].
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
    counting: bool,
}

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(DhmmError::DimensionMismatch("empty distribution".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DhmmError::InvalidParams(
                "distribution has a negative or non-finite weight".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(DhmmError::InvalidParams(format!(
                "distribution sums to {sum}"
            )));
        }
        Ok(Self {
            weights,
            counting: false,
        })
    }

    pub fn uniform(states: usize) -> Self {
        Self {
            weights: vec![1.0 / states as f64; states],
            counting: false,
        }
    }

    /// The counting measure on the state space.
    pub fn counting(states: usize) -> Self {
        Self {
            weights: vec![1.0; states],
            counting: true,
        }
    }

    pub fn point_mass(states: usize, state: usize) -> Self {
        let mut weights = vec![0.0; states];
        weights[state] = 1.0;
        Self {
            weights,
            counting: false,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_counting(&self) -> bool {
        self.counting
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
            counting: self.counting,
        }
    }
}

/// Strong connectivity of the graph with an edge s -> t whenever P(s, t) > 0.
pub fn is_irreducible(p: &TransitionMatrix) -> bool {
    let k = p.states();
    let reaches_all = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for t in 0..k {
                let w = if forward { p.get(s, t) } else { p.get(t, s) };
                if w > 0.0 && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.into_iter().all(|v| v)
    };
    reaches_all(true) && reaches_all(false)
}

/// Invariant distribution of an irreducible chain, from the linear system
/// (Pᵀ − I)π = 0 with one equation replaced by Σπ = 1.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<Distribution> {
    if !is_irreducible(p) {
        return Err(DhmmError::NonIrreducible);
    }
    let k = p.states();
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = p.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| DhmmError::NumericalFailure("singular stationary system".into()))?;
    let mut weights: Vec<f64> = sol.iter().map(|w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(DhmmError::NumericalFailure(
            "stationary solve produced no mass".into(),
        ));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let residual: f64 = p
        .left_apply(&weights)
        .iter()
        .zip(&weights)
        .map(|(a, b)| (a - b).abs())
        .sum();
    if residual > 1e-9 {
        return Err(DhmmError::NumericalFailure(format!(
            "stationary residual {residual}"
        )));
    }
    Distribution::new(weights)
}
