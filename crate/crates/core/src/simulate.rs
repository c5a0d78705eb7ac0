//! Trajectory generation for (X, Y, Z).
//!
//! A root seed is expanded into three independent ChaCha streams: the hidden
//! chain, the Y emissions and the Z noise. Each stream is consumed strictly in
//! time order, so a longer trajectory extends a shorter one with the same seed.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Poisson, StandardNormal};

use crate::error::{DhmmError, Result};
use crate::markov::{stationary_distribution, Distribution, TransitionMatrix};
use crate::models::{DhmModel, ModelKind, ObsSeq};
use crate::num::fmt_f64;
use crate::params::{unpack, Emission, ParamVector};

const CHAIN_STREAM: u64 = 0;
const Y_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Hidden states, 0-based.
    pub x: Vec<usize>,
    pub y: ObsSeq,
    pub z: ObsSeq,
    pub model_tag: ModelKind,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Writes `t,x,y,z` rows (vector observations as `y_1..y_M,z_1..z_M`),
    /// with 1-based t and x.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.y.dim();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["t".to_string(), "x".to_string()];
        if dim == 1 {
            header.push("y".into());
            header.push("z".into());
        } else {
            header.extend((1..=dim).map(|i| format!("y_{i}")));
            header.extend((1..=dim).map(|i| format!("z_{i}")));
        }
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![(t + 1).to_string(), (self.x[t] + 1).to_string()];
            rec.extend(self.y.get(t).iter().map(|v| fmt_f64(*v)));
            rec.extend(self.z.get(t).iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R, model_tag: ModelKind) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let cols = header.len();
        if cols < 4 || (cols - 2) % 2 != 0 || &header[0] != "t" || &header[1] != "x" {
            return Err(DhmmError::Io(format!(
                "unexpected trajectory header {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let dim = (cols - 2) / 2;
        let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| {
                    DhmmError::Io(format!("row {}: column {}: {e}", line + 2, i + 1))
                })
            };
            let state = parse(1)?;
            if state < 1.0 || state.fract() != 0.0 {
                return Err(DhmmError::Io(format!("row {}: bad state {state}", line + 2)));
            }
            x.push(state as usize - 1);
            for i in 0..dim {
                y.push(parse(2 + i)?);
                z.push(parse(2 + dim + i)?);
            }
        }
        if x.is_empty() {
            return Err(DhmmError::Io("trajectory file has no rows".into()));
        }
        Ok(Self {
            x,
            y: ObsSeq::new(dim, y)?,
            z: ObsSeq::new(dim, z)?,
            model_tag,
            seed: 0,
        })
    }

    pub fn load(path: &Path, model_tag: ModelKind) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), model_tag)
    }
}

/// Deterministic seed for replication `index` under `root` (SplitMix64 finalizer).
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub(crate) fn categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last cumulative sum
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

pub(crate) fn sample_poisson<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng)
}

pub(crate) fn sample_emission<R: Rng>(rng: &mut R, emission: &Emission, state: usize, out: &mut Vec<f64>) {
    match emission {
        Emission::Poisson { rates } => out.push(sample_poisson(rng, rates[state])),
        Emission::Gaussian { dim, means, factors } => {
            let v: Vec<f64> = (0..*dim).map(|_| rng.sample(StandardNormal)).collect();
            let f = &factors[state];
            let mut idx = 0;
            for i in 0..*dim {
                let mut acc = means[state][i];
                for vj in v.iter().take(i + 1) {
                    acc += f[idx] * vj;
                    idx += 1;
                }
                out.push(acc);
            }
        }
    }
}

/// Draws Z_t given Y_t = `y` at time index `t` (1-based).
pub(crate) fn add_noise<R: Rng>(rng: &mut R, model: &DhmModel, t: usize, y: &[f64], out: &mut Vec<f64>) {
    let beta = model.schedule().beta(t);
    match model.kind() {
        ModelKind::Poisson => out.push(y[0] + sample_poisson(rng, beta)),
        _ => {
            for v in y {
                let e: f64 = rng.sample(StandardNormal);
                out.push(v + beta * e);
            }
        }
    }
}

/// Simulates n steps with X₁ ∼ ν (stationary law of P_θ when `nu` is None).
pub fn simulate(
    model: &DhmModel,
    theta: &ParamVector,
    nu: Option<&Distribution>,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(DhmmError::InvalidParams("trajectory length must be positive".into()));
    }
    // Validates the emission parameters.
    model.kernel(theta).map_err(|e| DhmmError::InvalidParams(e.to_string()))?;
    let native = unpack(theta).map_err(|e| DhmmError::InvalidParams(e.to_string()))?;
    let initial = match nu {
        Some(nu) => {
            if nu.len() != model.states() || nu.is_counting() {
                return Err(DhmmError::InvalidParams(
                    "initial law must be a probability vector over the states".into(),
                ));
            }
            nu.clone()
        }
        None => stationary_distribution(&native.transition)
            .map_err(|e| DhmmError::InvalidParams(e.to_string()))?,
    };
    let x = simulate_chain(&native.transition, &initial, n, seed);

    let mut y_rng = stream(seed, Y_STREAM);
    let mut noise_rng = stream(seed, NOISE_STREAM);
    let dim = model.dim();
    let mut y = Vec::with_capacity(n * dim);
    let mut z = Vec::with_capacity(n * dim);
    for (t, &state) in x.iter().enumerate() {
        let start = y.len();
        sample_emission(&mut y_rng, &native.emission, state, &mut y);
        let yt = y[start..].to_vec();
        add_noise(&mut noise_rng, model, t + 1, &yt, &mut z);
    }
    Ok(Trajectory {
        x,
        y: ObsSeq::new(dim, y)?,
        z: ObsSeq::new(dim, z)?,
        model_tag: model.kind(),
        seed,
    })
}

fn simulate_chain(p: &TransitionMatrix, nu: &Distribution, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, CHAIN_STREAM);
    let mut x = Vec::with_capacity(n);
    let mut state = categorical(&mut rng, nu.weights());
    x.push(state);
    for _ in 1..n {
        state = categorical(&mut rng, p.row(state));
        x.push(state);
    }
    x
}

/// m(z_t, y_t) for every t: absolute difference, or Euclidean distance for
/// vector observations.
pub fn proximity_trace(traj: &Trajectory) -> Vec<f64> {
    traj.y
        .iter()
        .zip(traj.z.iter())
        .map(|(y, z)| {
            y.iter()
                .zip(z)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}
