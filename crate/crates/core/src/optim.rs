//! Box-constrained Nelder–Mead maximizer. Trial points are projected onto the
//! box; an objective value of −∞ marks an infeasible point.

use crate::error::{DhmmError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexSettings {
    pub max_iters: usize,
    /// Stop when the spread of simplex values is at most `value_tol · (1 + |best|)`...
    pub value_tol: f64,
    /// ...and every vertex lies within `param_tol · (1 + ‖best‖∞)` of the best one.
    pub param_tol: f64,
    /// Initial edge length as a fraction of the box width.
    pub initial_step: f64,
    pub keep_trace: bool,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            value_tol: 1e-9,
            param_tol: 1e-8,
            initial_step: 0.1,
            keep_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best vertex and value after every iteration, when requested.
    pub trace: Vec<(Vec<f64>, f64)>,
}

struct Problem<'a, F> {
    f: F,
    lower: &'a [f64],
    upper: &'a [f64],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Problem<'_, F> {
    /// Negated objective of the projected point.
    fn cost(&mut self, x: &mut [f64]) -> Result<f64> {
        for ((v, l), u) in x.iter_mut().zip(self.lower).zip(self.upper) {
            *v = v.clamp(*l, *u);
        }
        self.evaluations += 1;
        let value = (self.f)(x)?;
        if value.is_nan() {
            return Err(DhmmError::NonFinite { theta: x.to_vec() });
        }
        Ok(-value)
    }
}

/// Maximizes `f` over the box `[lower, upper]` starting from `start`.
pub fn maximize<F>(
    f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    settings: &SimplexSettings,
) -> Result<SimplexOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = start.len();
    if lower.len() != d || upper.len() != d {
        return Err(DhmmError::DimensionMismatch("box and start differ in length".into()));
    }
    let mut prob = Problem {
        f,
        lower,
        upper,
        evaluations: 0,
    };

    let mut x0 = start.to_vec();
    let c0 = prob.cost(&mut x0)?;
    if d == 0 {
        return Ok(SimplexOutcome {
            x: x0,
            value: -c0,
            iterations: 0,
            evaluations: prob.evaluations,
            converged: true,
            trace: Vec::new(),
        });
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), c0)];
    for i in 0..d {
        let width = upper[i] - lower[i];
        let mut step = settings.initial_step * width;
        if step == 0.0 {
            step = settings.initial_step * (1.0 + x0[i].abs());
        }
        let mut vertex = None;
        for attempt in 0..4 {
            let h = step / f64::from(1 << attempt);
            for dir in [1.0, -1.0] {
                let mut x = x0.clone();
                x[i] += dir * h;
                if x[i] > upper[i] || x[i] < lower[i] {
                    continue;
                }
                let c = prob.cost(&mut x)?;
                if c.is_finite() || vertex.is_none() {
                    vertex = Some((x, c));
                }
                if c.is_finite() {
                    break;
                }
            }
            if matches!(vertex, Some((_, c)) if c.is_finite()) {
                break;
            }
        }
        let v = match vertex {
            Some(v) => v,
            None => {
                // zero-width coordinate
                let mut x = x0.clone();
                x[i] += step;
                let c = prob.cost(&mut x)?;
                (x, c)
            }
        };
        simplex.push(v);
    }

    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; d];
    let mut trial = vec![0.0; d];

    while iterations < settings.max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        if settings.keep_trace {
            trace.push((simplex[0].0.clone(), -best));
        }
        if best.is_finite() && worst.is_finite() {
            let value_spread = worst - best;
            let scale = simplex[0].0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let param_spread = simplex[1..].iter().fold(0.0f64, |m, (x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .fold(m, |m, (a, b)| m.max((a - b).abs()))
            });
            if value_spread <= settings.value_tol * (1.0 + best.abs())
                && param_spread <= settings.param_tol * (1.0 + scale)
            {
                converged = true;
                break;
            }
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let worst_x = simplex[d].0.clone();
        for i in 0..d {
            trial[i] = centroid[i] + alpha * (centroid[i] - worst_x[i]);
        }
        let mut reflected = trial.clone();
        let c_r = prob.cost(&mut reflected)?;

        if c_r < best {
            for i in 0..d {
                trial[i] = centroid[i] + gamma * (reflected[i] - centroid[i]);
            }
            let mut expanded = trial.clone();
            let c_e = prob.cost(&mut expanded)?;
            simplex[d] = if c_e < c_r { (expanded, c_e) } else { (reflected, c_r) };
            continue;
        }
        if c_r < simplex[d - 1].1 {
            simplex[d] = (reflected, c_r);
            continue;
        }
        // contraction: outside if the reflection beat the worst vertex, else inside
        let (towards, c_ref) = if c_r < worst {
            (&reflected, c_r)
        } else {
            (&worst_x, worst)
        };
        for i in 0..d {
            trial[i] = centroid[i] + rho * (towards[i] - centroid[i]);
        }
        let mut contracted = trial.clone();
        let c_c = prob.cost(&mut contracted)?;
        if c_c < c_ref || (c_c.is_finite() && !c_ref.is_finite()) {
            simplex[d] = (contracted, c_c);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for (v, b) in vertex.0.iter_mut().zip(&best_x) {
                *v = b + shrink * (*v - b);
            }
            vertex.1 = prob.cost(&mut vertex.0)?;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, c) = simplex.swap_remove(0);
    Ok(SimplexOutcome {
        x,
        value: -c,
        iterations,
        evaluations: prob.evaluations,
        converged,
        trace,
    })
}
