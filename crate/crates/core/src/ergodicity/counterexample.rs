//! A kernel with bounded jumps and `ξ(y) = e^{−|y|} → 0`: started far enough
//! out, the chain never reaches the region where `ξ > β` within `n` steps, so
//! `(P_γⁿ 1)(x) ≥ e^{−nγβ}` and `‖P_γⁿ‖_∞ = 1` for every `γ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::laplace::shard_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleSpec {
    /// Steps are uniform on `[−S, S]`.
    pub step: f64,
    pub gammas: Vec<f64>,
    pub ns: Vec<usize>,
    pub betas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        CounterexampleSpec {
            step: 1.0,
            gammas: vec![0.0, 1.0, 5.0],
            ns: vec![1, 2, 5, 10],
            betas: vec![1.0, 0.1, 0.01],
            trials: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleRow {
    pub gamma: f64,
    pub n: usize,
    pub beta: f64,
    /// Starting point, beyond `R + nS` with `ξ ≤ β` outside `[−R, R]`.
    pub x: f64,
    /// `e^{−nγβ}`.
    pub lower_bound: f64,
    /// Monte Carlo estimate of `(P_γⁿ 1_{[ξ≤β]})(x)`.
    pub estimate: f64,
    pub std_error: f64,
    pub holds: bool,
}

fn xi(y: f64) -> f64 {
    (-y.abs()).exp()
}

pub fn counterexample_demo(spec: &CounterexampleSpec) -> Result<Vec<CounterexampleRow>> {
    if !(spec.step > 0.0 && spec.step.is_finite()) {
        return Err(Error::param("counterexample.step", "step bound must be positive and finite"));
    }
    if spec.trials < 2 {
        return Err(Error::param("counterexample.trials", "at least 2 trials are needed"));
    }
    if let Some(g) = spec.gammas.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::param("counterexample.gammas", format!("gamma must be finite and ≥ 0, got {g}")));
    }
    if let Some(b) = spec.betas.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
        return Err(Error::param("counterexample.betas", format!("beta must be finite and > 0, got {b}")));
    }
    let mut cases = Vec::new();
    for &gamma in &spec.gammas {
        for &n in &spec.ns {
            for &beta in &spec.betas {
                cases.push((gamma, n, beta));
            }
        }
    }
    Ok(cases
        .into_par_iter()
        .enumerate()
        .map(|(idx, (gamma, n, beta))| row(spec, idx, gamma, n, beta))
        .collect())
}

fn row(spec: &CounterexampleSpec, idx: usize, gamma: f64, n: usize, beta: f64) -> CounterexampleRow {
    let r = (-beta.ln()).max(0.0);
    let x = r + (n as f64 + 1.0) * spec.step;
    let mut rng = ChaCha8Rng::seed_from_u64(shard_seed(spec.seed, idx));
    let (mut mean, mut m2) = (0.0, 0.0);
    for t in 0..spec.trials {
        let mut y = x;
        let mut sum = 0.0;
        for _ in 0..n {
            y += rng.random_range(-spec.step..=spec.step);
            sum += xi(y);
        }
        let v = if xi(y) <= beta { (-gamma * sum).exp() } else { 0.0 };
        let d = v - mean;
        mean += d / (t + 1) as f64;
        m2 += d * (v - mean);
    }
    let std_error = (m2 / (spec.trials - 1) as f64 / spec.trials as f64).sqrt();
    let lower_bound = (-(n as f64) * gamma * beta).exp();
    CounterexampleRow {
        gamma,
        n,
        beta,
        x,
        lower_bound,
        estimate: mean,
        std_error,
        holds: mean >= lower_bound * (1.0 - 1e-12),
    }
}
