//! Laplace transforms `L⁽ⁿ⁾(γ) = E_μ[exp(−γ Σ_{k=0}^n ξ(X_k))]` and the
//! generating function `g(γ, λ) = Σ_n λⁿ L⁽ⁿ⁾(γ)`.
//!
//! Monte Carlo estimates reuse every path for all horizons and all tilts, so
//! per-path values are monotone in both `n` and `γ`. Trials are split into a
//! fixed number of shards with derived seeds; shard statistics are pooled in
//! shard order, which keeps results independent of the thread count.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{DistributionSpec, InitialLaw, MarkovModel, ModelKind, NoiseSpec, ObservableKind, StationaryLaw};
use crate::operator::{tilt_factor, GridLaw, OperatorLaplace, TiltedOperator};
use crate::quadrature::integrate;

pub const DEFAULT_TRIALS: usize = 100_000;
pub const DEFAULT_SERIES_TOL: f64 = 1e-6;
pub const DEFAULT_LAMBDA: f64 = 2.0;
/// Consecutive term ratios inspected before deciding convergence or divergence.
pub const RATIO_WINDOW: usize = 20;
const SHARDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    MonteCarlo,
    OracleIid,
    OracleRiccati,
    OracleFinite,
    Operator,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::MonteCarlo => "monte_carlo",
            Source::OracleIid => "oracle_iid",
            Source::OracleRiccati => "oracle_riccati",
            Source::OracleFinite => "oracle_finite",
            Source::Operator => "operator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceEstimate {
    pub gamma: f64,
    pub n: usize,
    pub value: f64,
    /// Zero for exact sources.
    pub std_error: f64,
    pub trials: usize,
    pub source: Source,
}

impl LaplaceEstimate {
    fn exact(gamma: f64, n: usize, value: f64, source: Source) -> Self {
        LaplaceEstimate {
            gamma,
            n,
            value,
            std_error: 0.0,
            trials: 0,
            source,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::param("gamma", format!("tilt must be non-negative, got {gamma}")))
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    /// Pairwise pooling of two partial accumulators.
    fn merge(&mut self, other: &Welford) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        self.mean += d * other.count / n;
        self.m2 += other.m2 + d * d * self.count * other.count / n;
        self.count = n;
    }

    fn std_error(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.count - 1.0) / self.count).sqrt()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of shard `s` derived from the run seed.
pub fn shard_seed(seed: u64, shard: usize) -> u64 {
    splitmix64(seed ^ splitmix64(shard as u64 + 1))
}

/// Monte Carlo estimates for every tilt in `gammas` and every horizon
/// `0..=n`, from one set of paths. Indexed `[gamma][horizon]`.
pub fn laplace_mc_grid(
    model: &MarkovModel,
    initial: &InitialLaw,
    gammas: &[f64],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<LaplaceEstimate>>> {
    if trials == 0 {
        return Err(Error::param("mc.trials", "at least one trial is required"));
    }
    for &g in gammas {
        check_gamma(g)?;
    }
    let cells = gammas.len() * (n + 1);
    let shards: Vec<Result<Vec<Welford>>> = (0..SHARDS)
        .into_par_iter()
        .map(|s| {
            let count = trials / SHARDS + usize::from(s < trials % SHARDS);
            let mut acc = vec![Welford::default(); cells];
            let mut rng = ChaCha8Rng::seed_from_u64(shard_seed(seed, s));
            let mut path = Vec::with_capacity(n + 1);
            for _ in 0..count {
                model.fill_path(initial, &mut rng, &mut path, n)?;
                let mut sum = 0.0;
                for (k, &x) in path.iter().enumerate() {
                    sum += model.xi(x)?;
                    for (gi, &g) in gammas.iter().enumerate() {
                        acc[gi * (n + 1) + k].push(tilt_factor(g, sum));
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Welford::default(); cells];
    for shard in shards {
        for (t, s) in total.iter_mut().zip(shard?.iter()) {
            t.merge(s);
        }
    }
    Ok(gammas
        .iter()
        .enumerate()
        .map(|(gi, &gamma)| {
            (0..=n)
                .map(|k| {
                    let w = &total[gi * (n + 1) + k];
                    LaplaceEstimate {
                        gamma,
                        n: k,
                        value: w.mean.clamp(0.0, 1.0),
                        std_error: w.std_error(),
                        trials,
                        source: Source::MonteCarlo,
                    }
                })
                .collect()
        })
        .collect())
}

/// Monte Carlo estimate of `L⁽ⁿ⁾(γ)`.
pub fn laplace_mc(
    model: &MarkovModel,
    initial: &InitialLaw,
    gamma: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<LaplaceEstimate> {
    let grid = laplace_mc_grid(model, initial, &[gamma], n, trials, seed)?;
    Ok(grid[0][n])
}

/// `L(γ)^{n+1}` for an i.i.d. sequence with marginal transform `L(γ)`.
pub fn laplace_oracle_iid(marginal: f64, gamma: f64, n: usize) -> Result<LaplaceEstimate> {
    check_gamma(gamma)?;
    if !(0.0..=1.0).contains(&marginal) {
        return Err(Error::param("marginal", "marginal Laplace transform must lie in [0, 1]"));
    }
    Ok(LaplaceEstimate::exact(gamma, n, marginal.powi(n as i32 + 1), Source::OracleIid))
}

/// `ν(e^{−γξ})` for a law `ν` on the real line.
fn law_transform(model: &MarkovModel, d: &DistributionSpec, gamma: f64) -> Result<f64> {
    if let DistributionSpec::Dirac { at } = d {
        return Ok(tilt_factor(gamma, model.xi(*at)?));
    }
    d.validate()?;
    let (lo, hi) = d.support(1e-17);
    let err = RefCell::new(None);
    let value = integrate(
        |x| match model.xi(x) {
            Ok(v) => tilt_factor(gamma, v) * d.pdf(x).unwrap_or(0.0),
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        lo,
        hi,
        256,
        16,
    );
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(value.clamp(0.0, 1.0)),
    }
}

/// `π(e^{−γξ})` for the stationary law of an i.i.d. chain.
pub fn marginal_laplace(model: &MarkovModel, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    match model.kind() {
        ModelKind::Knudsen {
            pi: StationaryLaw::Discrete(pi),
            ..
        } => pi
            .iter()
            .enumerate()
            .map(|(i, p)| Ok(p * tilt_factor(gamma, model.xi(i as f64)?)))
            .sum(),
        ModelKind::Knudsen {
            pi: StationaryLaw::Continuous(d),
            ..
        } => law_transform(model, d, gamma),
        _ => Err(Error::OracleMismatch("marginal transform needs a resampling chain".into())),
    }
}

/// Sequential `L⁽⁰⁾(γ), L⁽¹⁾(γ), …` from an exact source.
#[derive(Debug, Clone)]
pub struct LaplaceStream {
    state: StreamState,
    source: Source,
}

#[derive(Debug, Clone)]
enum StreamState {
    Iid {
        next: f64,
        l: f64,
    },
    /// `E_x[e^{−γΣX_k²}] = C e^{−b x²}`, integrated against `N(mean, var)`.
    Riccati {
        gamma: f64,
        alpha2: f64,
        s2: f64,
        mean: f64,
        var: f64,
        b: f64,
        c: f64,
    },
    Finite {
        mu_d: Vec<f64>,
        pd: Vec<Vec<f64>>,
        h: Vec<f64>,
    },
    Operator(OperatorLaplace),
}

impl LaplaceStream {
    /// Exact stream for a model with a closed form: finite state space,
    /// i.i.d. resampling, or Gaussian AR(1) with `ξ = x²`.
    pub fn oracle(model: &MarkovModel, initial: &InitialLaw, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if model.num_states().is_some() {
            return Self::finite(model, initial, gamma);
        }
        if model.is_iid() {
            return Self::iid(model, initial, gamma);
        }
        if let Some((alpha, sigma)) = riccati_parameters(model) {
            return Self::riccati(alpha, sigma, gamma, initial);
        }
        Err(Error::OracleMismatch("no closed-form Laplace transform for this model".into()))
    }

    /// Stream from a discretized operator.
    pub fn operator(op: Arc<TiltedOperator>, law: GridLaw) -> Self {
        LaplaceStream {
            state: StreamState::Operator(OperatorLaplace::new(op, law)),
            source: Source::Operator,
        }
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn iid(model: &MarkovModel, initial: &InitialLaw, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !model.is_iid() {
            return Err(Error::OracleMismatch("chain is not i.i.d. under its stationary law".into()));
        }
        let l = marginal_laplace(model, gamma)?;
        let first = match initial {
            InitialLaw::Stationary => l,
            InitialLaw::Point(x) => tilt_factor(gamma, model.xi(*x)?),
            InitialLaw::Law(d) if model.num_states().is_none() => law_transform(model, d, gamma)?,
            InitialLaw::Law(_) => {
                return Err(Error::UnsupportedInitialLaw("continuous law on a finite state space".into()));
            }
        };
        Ok(LaplaceStream {
            state: StreamState::Iid { next: first, l },
            source: Source::OracleIid,
        })
    }

    /// `X_k = αX_{k−1} + N(0, σ²)` with `ξ = x²`.
    ///
    /// `E_x[exp(−γ Σ_{k≤m} X_k²)] = C_m e^{−b_m x²}` with `b_0 = γ`, `C_0 = 1` and
    /// `b_{m+1} = γ + α²b_m/(1+2σ²b_m)`, `C_{m+1} = C_m (1+2σ²b_m)^{−1/2}`;
    /// Gaussian initial laws are integrated against `e^{−b_m x²}` in closed form.
    pub fn riccati(alpha: f64, sigma: f64, gamma: f64, initial: &InitialLaw) -> Result<Self> {
        check_gamma(gamma)?;
        if !gamma.is_finite() {
            return Err(Error::param("gamma", "the Riccati oracle needs a finite tilt"));
        }
        if !(alpha.abs() < 1.0 && sigma > 0.0) {
            return Err(Error::param("model", "need |alpha| < 1 and sigma > 0"));
        }
        let s2 = sigma * sigma;
        let (mean, var) = match initial {
            InitialLaw::Point(x) => (*x, 0.0),
            InitialLaw::Law(DistributionSpec::Dirac { at }) => (*at, 0.0),
            InitialLaw::Stationary => (0.0, s2 / (1.0 - alpha * alpha)),
            InitialLaw::Law(DistributionSpec::Gaussian { mean, sd }) => (*mean, sd * sd),
            InitialLaw::Law(d) => {
                return Err(Error::UnsupportedInitialLaw(format!(
                    "Riccati oracle needs a Gaussian or point law, got {d:?}"
                )));
            }
        };
        Ok(LaplaceStream {
            state: StreamState::Riccati {
                gamma,
                alpha2: alpha * alpha,
                s2,
                mean,
                var,
                b: gamma,
                c: 1.0,
            },
            source: Source::OracleRiccati,
        })
    }

    /// `μᵀ D_γ (P D_γ)ᵏ 1` by repeated matrix–vector products.
    pub fn finite(model: &MarkovModel, initial: &InitialLaw, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let p = model
            .transition_matrix()
            .ok_or_else(|| Error::OracleMismatch("finite oracle needs a finite state space".into()))?;
        let m = p.len();
        let mu: Vec<f64> = match initial {
            InitialLaw::Stationary => model.stationary_vector().expect("finite model").to_vec(),
            InitialLaw::Point(x) => {
                let i = x.round();
                if i < 0.0 || i as usize >= m || (x - i).abs() > 1e-9 {
                    return Err(Error::param("initial.x", format!("{x} is not a state")));
                }
                let mut e = vec![0.0; m];
                e[i as usize] = 1.0;
                e
            }
            InitialLaw::Law(_) => {
                return Err(Error::UnsupportedInitialLaw("continuous law on a finite state space".into()));
            }
        };
        let d: Vec<f64> = (0..m)
            .map(|i| Ok(tilt_factor(gamma, model.xi(i as f64)?)))
            .collect::<Result<_>>()?;
        let pd = p.iter().map(|row| row.iter().zip(&d).map(|(p, d)| p * d).collect()).collect();
        Ok(LaplaceStream {
            state: StreamState::Finite {
                mu_d: mu.iter().zip(&d).map(|(u, d)| u * d).collect(),
                pd,
                h: vec![1.0; m],
            },
            source: Source::OracleFinite,
        })
    }

    /// Next term of the sequence.
    pub fn next_value(&mut self) -> f64 {
        match &mut self.state {
            StreamState::Iid { next, l } => {
                let v = *next;
                *next *= *l;
                v
            }
            StreamState::Riccati {
                gamma,
                alpha2,
                s2,
                mean,
                var,
                b,
                c,
            } => {
                let q = 1.0 + 2.0 * *var * *b;
                let v = *c / q.sqrt() * (-*b * *mean * *mean / q).exp();
                let d = 1.0 + 2.0 * *s2 * *b;
                *c /= d.sqrt();
                *b = *gamma + *alpha2 * *b / d;
                v
            }
            StreamState::Finite { mu_d, pd, h } => {
                let v: f64 = mu_d.iter().zip(h.iter()).map(|(u, h)| u * h).sum();
                *h = pd.iter().map(|row| row.iter().zip(h.iter()).map(|(p, h)| p * h).sum()).collect();
                v.clamp(0.0, 1.0)
            }
            StreamState::Operator(it) => it.next().expect("infinite iterator"),
        }
    }

    /// The next `count` terms.
    pub fn take_values(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.next_value()).collect()
    }
}

/// `L⁽ᵏ⁾(γ)`, `k ≤ n`, for a chain that is i.i.d. from its first step on.
pub fn iid_series(model: &MarkovModel, initial: &InitialLaw, gamma: f64, n: usize) -> Result<Vec<f64>> {
    Ok(LaplaceStream::iid(model, initial, gamma)?.take_values(n + 1))
}

/// i.i.d. oracle applied to a model: checks the model, then `L(γ)^{n+1}`.
pub fn laplace_oracle_iid_model(model: &MarkovModel, initial: &InitialLaw, gamma: f64, n: usize) -> Result<LaplaceEstimate> {
    let series = iid_series(model, initial, gamma, n)?;
    Ok(LaplaceEstimate::exact(gamma, n, series[n], Source::OracleIid))
}

/// `L⁽ᵏ⁾(γ)`, `k ≤ n`, for the Gaussian AR(1) chain with `ξ = x²`.
pub fn riccati_series(alpha: f64, sigma: f64, gamma: f64, n: usize, initial: &InitialLaw) -> Result<Vec<f64>> {
    Ok(LaplaceStream::riccati(alpha, sigma, gamma, initial)?.take_values(n + 1))
}

pub fn laplace_oracle_riccati(alpha: f64, sigma: f64, gamma: f64, n: usize, initial: &InitialLaw) -> Result<LaplaceEstimate> {
    let series = riccati_series(alpha, sigma, gamma, n, initial)?;
    Ok(LaplaceEstimate::exact(gamma, n, series[n], Source::OracleRiccati))
}

/// Riccati parameters `(α, σ)` if the model is a Gaussian AR(1) with `ξ = x²`.
pub fn riccati_parameters(model: &MarkovModel) -> Option<(f64, f64)> {
    let quadratic = match &model.observable().kind {
        ObservableKind::Quadratic => true,
        ObservableKind::Power { q, scale } => *q == 2.0 && *scale == 1.0,
        _ => false,
    };
    match model.kind() {
        ModelKind::Ar1 {
            alpha,
            noise: NoiseSpec::Gaussian { sigma },
            ..
        } if quadratic => Some((*alpha, *sigma)),
        _ => None,
    }
}

pub fn riccati_series_model(model: &MarkovModel, initial: &InitialLaw, gamma: f64, n: usize) -> Result<Vec<f64>> {
    let (alpha, sigma) = riccati_parameters(model)
        .ok_or_else(|| Error::OracleMismatch("Riccati oracle needs Gaussian AR(1) noise and ξ = x²".into()))?;
    riccati_series(alpha, sigma, gamma, n, initial)
}

/// `μᵀ D_γ (P D_γ)ᵏ 1`, `k ≤ n`.
pub fn finite_series(model: &MarkovModel, initial: &InitialLaw, gamma: f64, n: usize) -> Result<Vec<f64>> {
    Ok(LaplaceStream::finite(model, initial, gamma)?.take_values(n + 1))
}

pub fn laplace_oracle_finite(model: &MarkovModel, gamma: f64, n: usize, initial: &InitialLaw) -> Result<LaplaceEstimate> {
    let series = finite_series(model, initial, gamma, n)?;
    Ok(LaplaceEstimate::exact(gamma, n, series[n], Source::OracleFinite))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStatus {
    Finite,
    Divergent,
    /// Neither test fired within the term budget.
    Inconclusive,
}

impl SeriesStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesStatus::Finite => "finite",
            SeriesStatus::Divergent => "divergent",
            SeriesStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratingValue {
    pub gamma: f64,
    pub lambda: f64,
    pub status: SeriesStatus,
    /// Sum including the geometric tail closure; `None` unless finite.
    pub value: Option<f64>,
    /// Number of terms summed explicitly.
    pub truncation_n: usize,
    /// Bound on the error of the tail closure.
    pub truncation_bound: f64,
    /// Last observed term ratio `λ L⁽ⁿ⁺¹⁾ / L⁽ⁿ⁾`.
    pub ratio: f64,
}

/// Sums `Σ λⁿ L⁽ⁿ⁾(γ)` with `L⁽ⁿ⁾` supplied for `n = 0, 1, …` in order.
///
/// Once [`RATIO_WINDOW`] consecutive term ratios are available the series is
/// declared divergent if they all are at least 1, and finite if they all lie
/// below 1 and the geometric tail closure is insensitive (to `tol`, relative
/// to the value) to the spread of the window.
pub fn generating_function(
    mut supplier: impl FnMut(usize) -> Result<f64>,
    gamma: f64,
    lambda: f64,
    tol: f64,
    n_max: usize,
) -> Result<GeneratingValue> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("solve.lambda", "lambda must be finite and non-negative"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("solve.series_tol", "tolerance must be positive"));
    }
    let mut out = GeneratingValue {
        gamma,
        lambda,
        status: SeriesStatus::Inconclusive,
        value: None,
        truncation_n: 0,
        truncation_bound: f64::INFINITY,
        ratio: f64::NAN,
    };
    let mut window: VecDeque<f64> = VecDeque::with_capacity(RATIO_WINDOW);
    let mut sum = 0.0;
    let (mut prev_l, mut term) = (0.0, 0.0);
    for n in 0..=n_max {
        let l = supplier(n)?;
        if !(0.0..=1.0 + 1e-12).contains(&l) {
            return Err(Error::param("laplace", format!("L^({n}) = {l} lies outside [0, 1]")));
        }
        term = if n == 0 { l } else if prev_l > 0.0 { term * lambda * (l / prev_l) } else { 0.0 };
        sum += term;
        out.truncation_n = n + 1;
        if l == 0.0 || lambda == 0.0 || term == 0.0 {
            out.status = SeriesStatus::Finite;
            out.value = Some(sum);
            out.truncation_bound = 0.0;
            return Ok(out);
        }
        if !sum.is_finite() {
            out.status = SeriesStatus::Divergent;
            return Ok(out);
        }
        if n > 0 {
            let q = lambda * l / prev_l;
            out.ratio = q;
            if window.len() == RATIO_WINDOW {
                window.pop_front();
            }
            window.push_back(q);
        }
        prev_l = l;
        if window.len() < RATIO_WINDOW {
            continue;
        }
        let (lo, hi) = window.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &q| (a.min(q), b.max(q)));
        if lo >= 1.0 {
            out.status = SeriesStatus::Divergent;
            return Ok(out);
        }
        if hi < 1.0 {
            let q = out.ratio;
            let tail = term * q / (1.0 - q);
            let q_up = q + (hi - lo);
            let bound = if q_up < 1.0 { (term * q_up / (1.0 - q_up) - tail).abs() } else { f64::INFINITY };
            out.truncation_bound = bound;
            let value = sum + tail;
            if bound <= tol * value.abs().max(1.0) {
                out.status = SeriesStatus::Finite;
                out.value = Some(value);
                return Ok(out);
            }
        }
    }
    Ok(out)
}
