//! Random model instances shared by the integration tests.

#![allow(dead_code)]

use dhmm::markov::Distribution;
use dhmm::models::{DhmModel, NoiseSchedule, ObsSeq};
use dhmm::params::{Layout, ParamVector};
use dhmm::simulate::simulate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub model: DhmModel,
    pub theta: ParamVector,
    pub nu: Distribution,
    pub obs: ObsSeq,
}

/// Transition block: K − 1 leading entries of rows drawn from a smoothed
/// uniform simplex sample.
fn transition_block(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for _ in 0..k {
        let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        out.extend(raw[..k - 1].iter().map(|v| v / total));
    }
    out
}

pub fn random_theta(rng: &mut ChaCha8Rng, model: &DhmModel) -> ParamVector {
    let k = model.states();
    let layout = model.layout();
    let mut values = vec![0.0; layout.dimension()];
    if model.is_count_emission() {
        for i in layout.emission_range() {
            values[i] = rng.random_range(0.5..25.0);
        }
    } else {
        let dim = model.dim();
        for i in layout.means_range() {
            values[i] = rng.random_range(-3.0..3.0);
        }
        let flen = Layout::factor_len(dim);
        let start = layout.scales_range().start;
        let diag: Vec<usize> = Layout::factor_diagonal(dim).collect();
        for s in 0..k {
            for pos in 0..flen {
                values[start + s * flen + pos] = if diag.contains(&pos) {
                    rng.random_range(0.5..2.0)
                } else {
                    rng.random_range(-0.5..0.5)
                };
            }
        }
    }
    let t = layout.transition_range();
    values[t.clone()].copy_from_slice(&transition_block(rng, k));
    ParamVector::new(layout, values).unwrap()
}

pub fn random_schedule(rng: &mut ChaCha8Rng) -> NoiseSchedule {
    NoiseSchedule::new(rng.random_range(0.0..5.0), rng.random_range(0.5..2.0), 0.0).unwrap()
}

fn random_nu(rng: &mut ChaCha8Rng, k: usize) -> Distribution {
    let w: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    Distribution::new(w.into_iter().map(|v| v / total).collect()).unwrap()
}

/// A Poisson or Gaussian instance with K ≤ `max_states`, n ≤ `max_len` and
/// observations simulated from the instance itself.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_states: usize,
    max_len: usize,
    schedule: Option<NoiseSchedule>,
) -> Instance {
    let k = rng.random_range(1..=max_states);
    let n = rng.random_range(1..=max_len);
    let schedule = schedule.unwrap_or_else(|| random_schedule(rng));
    let model = if rng.random_bool(0.5) {
        DhmModel::poisson(k, schedule).unwrap()
    } else {
        DhmModel::gaussian(k, rng.random_range(1..=2), schedule).unwrap()
    };
    let theta = random_theta(rng, &model);
    let nu = random_nu(rng, k);
    let obs = simulate(&model, &theta, Some(&nu), n, rng.random()).unwrap().z;
    Instance { model, theta, nu, obs }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
