//! Markov models `(P, π, ξ)`: autoregressive chains, Knudsen gas mixtures
//! and finite-state chains, with sampling and transition densities.

mod distribution;
mod observable;

pub use distribution::{DistributionSpec, NoiseSpec};
pub use observable::{evaluate_observable_on_grid, GrowthProfile, Observable, ObservableKind, WeightFunction};

pub(crate) use distribution::standard_normal_quantile;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The `U` part of a Knudsen kernel `P = απ + (1−α)U`.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseKernel {
    /// `U(x, ·) = π`.
    Resampling,
    /// Row-stochastic matrix on `{0, …, n−1}`.
    Finite(Vec<Vec<f64>>),
    /// `U(x, dy) = N(a·x, σ²)`, whose stationary law is `N(0, σ²/(1−a²))`.
    Ar1 { alpha: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StationaryLaw {
    Continuous(DistributionSpec),
    Discrete(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Ar1 {
        alpha: f64,
        noise: NoiseSpec,
        r0: f64,
    },
    Knudsen {
        alpha: f64,
        base: BaseKernel,
        pi: StationaryLaw,
    },
    FiniteState {
        matrix: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
}

/// A Markov kernel together with its stationary law and observable ξ.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    kind: ModelKind,
    observable: Observable,
}

/// Law of `X_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Point(f64),
    Stationary,
    Law(DistributionSpec),
}

impl std::fmt::Display for InitialLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialLaw::Point(x) => write!(f, "point({x})"),
            InitialLaw::Stationary => f.write_str("stationary"),
            InitialLaw::Law(d) => write!(f, "{d:?}"),
        }
    }
}

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

impl MarkovModel {
    pub fn ar1(alpha: f64, noise: NoiseSpec, r0: f64, observable: Observable) -> Result<Self> {
        if !(alpha.abs() < 1.0) {
            return Err(Error::param("model.alpha", "alpha must satisfy |alpha| < 1"));
        }
        noise.validate()?;
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::param("model.r0", "r0 must be positive"));
        }
        if !noise.has_moment(r0) {
            return Err(Error::param("model.r0", "noise has no finite moment of order r0"));
        }
        observable.validate()?;
        Ok(MarkovModel {
            kind: ModelKind::Ar1 { alpha, noise, r0 },
            observable,
        })
    }

    /// Knudsen gas with `U = π` (the chain is i.i.d. under `π`).
    pub fn knudsen_resampling(alpha: f64, pi: DistributionSpec, observable: Observable) -> Result<Self> {
        check_knudsen_alpha(alpha)?;
        pi.validate()?;
        observable.validate()?;
        Ok(MarkovModel {
            kind: ModelKind::Knudsen {
                alpha,
                base: BaseKernel::Resampling,
                pi: StationaryLaw::Continuous(pi),
            },
            observable,
        })
    }

    /// Knudsen gas on a finite space; `π` is the stationary vector of `U`.
    pub fn knudsen_finite(alpha: f64, u: Vec<Vec<f64>>, observable: Observable) -> Result<Self> {
        check_knudsen_alpha(alpha)?;
        check_stochastic(&u)?;
        let pi = stationary_vector(&u)?;
        observable.validate()?;
        Ok(MarkovModel {
            kind: ModelKind::Knudsen {
                alpha,
                base: BaseKernel::Finite(u),
                pi: StationaryLaw::Discrete(pi),
            },
            observable,
        })
    }

    /// Knudsen gas whose `U` is a Gaussian AR(1) kernel.
    pub fn knudsen_ar1(alpha: f64, u_alpha: f64, u_sigma: f64, observable: Observable) -> Result<Self> {
        check_knudsen_alpha(alpha)?;
        if !(u_alpha.abs() < 1.0) {
            return Err(Error::param("model.base_alpha", "base alpha must satisfy |alpha| < 1"));
        }
        if !(u_sigma > 0.0) {
            return Err(Error::param("model.base_sigma", "base sigma must be positive"));
        }
        observable.validate()?;
        let sd = u_sigma / (1.0 - u_alpha * u_alpha).sqrt();
        Ok(MarkovModel {
            kind: ModelKind::Knudsen {
                alpha,
                base: BaseKernel::Ar1 {
                    alpha: u_alpha,
                    sigma: u_sigma,
                },
                pi: StationaryLaw::Continuous(DistributionSpec::Gaussian { mean: 0.0, sd }),
            },
            observable,
        })
    }

    /// Finite chain; the stationary vector is solved for.
    pub fn finite_state(matrix: Vec<Vec<f64>>, observable: Observable) -> Result<Self> {
        check_stochastic(&matrix)?;
        let stationary = stationary_vector(&matrix)?;
        Self::finite_state_with_stationary(matrix, stationary, observable)
    }

    pub fn finite_state_with_stationary(
        matrix: Vec<Vec<f64>>,
        stationary: Vec<f64>,
        observable: Observable,
    ) -> Result<Self> {
        check_stochastic(&matrix)?;
        check_stationary(&matrix, &stationary)?;
        observable.validate()?;
        if let ObservableKind::Table(values) = &observable.kind {
            if values.len() != matrix.len() {
                return Err(Error::param("observable.params", "table length must equal the number of states"));
            }
        }
        Ok(MarkovModel {
            kind: ModelKind::FiniteState { matrix, stationary },
            observable,
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn with_observable(&self, observable: Observable) -> Result<Self> {
        observable.validate()?;
        Ok(MarkovModel {
            kind: self.kind.clone(),
            observable,
        })
    }

    pub fn xi(&self, x: f64) -> Result<f64> {
        self.observable.eval(x)
    }

    /// `r0` of the weight `V = (1+|x|)^r0`; finite and Knudsen models use 1.
    pub fn r0(&self) -> f64 {
        match self.kind {
            ModelKind::Ar1 { r0, .. } => r0,
            _ => 1.0,
        }
    }

    /// Number of states for chains on a finite space.
    pub fn num_states(&self) -> Option<usize> {
        match &self.kind {
            ModelKind::FiniteState { matrix, .. } => Some(matrix.len()),
            ModelKind::Knudsen {
                base: BaseKernel::Finite(u),
                ..
            } => Some(u.len()),
            _ => None,
        }
    }

    /// Full transition matrix for chains on a finite space.
    pub fn transition_matrix(&self) -> Option<Vec<Vec<f64>>> {
        match &self.kind {
            ModelKind::FiniteState { matrix, .. } => Some(matrix.clone()),
            ModelKind::Knudsen {
                alpha,
                base: BaseKernel::Finite(u),
                pi: StationaryLaw::Discrete(pi),
            } => Some(
                u.iter()
                    .map(|row| row.iter().zip(pi).map(|(u, p)| alpha * p + (1.0 - alpha) * u).collect())
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Stationary vector for chains on a finite space.
    pub fn stationary_vector(&self) -> Option<&[f64]> {
        match &self.kind {
            ModelKind::FiniteState { stationary, .. } => Some(stationary),
            ModelKind::Knudsen {
                pi: StationaryLaw::Discrete(pi),
                ..
            } => Some(pi),
            _ => None,
        }
    }

    /// Closed-form stationary law of a continuous-state model, if known.
    pub fn stationary_distribution(&self) -> Option<DistributionSpec> {
        match self.kind {
            ModelKind::Ar1 {
                alpha,
                noise: NoiseSpec::Gaussian { sigma },
                ..
            } => Some(DistributionSpec::Gaussian {
                mean: 0.0,
                sd: sigma / (1.0 - alpha * alpha).sqrt(),
            }),
            ModelKind::Knudsen {
                pi: StationaryLaw::Continuous(pi),
                ..
            } => Some(pi),
            _ => None,
        }
    }

    /// Whether `(X_n)` is i.i.d. under its stationary law.
    pub fn is_iid(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::Knudsen {
                base: BaseKernel::Resampling,
                ..
            } | ModelKind::Knudsen { alpha: 1.0, .. }
        )
    }

    fn check_state(&self, x: f64) -> Result<usize> {
        let n = self.num_states().expect("finite model");
        let i = x.round();
        if i < 0.0 || i as usize >= n || (x - i).abs() > 1e-9 {
            return Err(Error::param("state", format!("{x} is not a state of an {n}-state chain")));
        }
        Ok(i as usize)
    }

    /// Density of `P(x, dy)` at `y` (matrix entry for finite chains).
    pub fn transition_density(&self, x: f64, y: f64) -> Result<f64> {
        if let Some(p) = self.transition_matrix() {
            let i = self.check_state(x)?;
            let j = self.check_state(y)?;
            return Ok(p[i][j]);
        }
        match &self.kind {
            ModelKind::Ar1 { alpha, noise, .. } => Ok(noise.pdf(y - alpha * x)),
            ModelKind::Knudsen {
                alpha,
                base,
                pi: StationaryLaw::Continuous(pi),
            } => {
                let pi_y = pi
                    .pdf(y)
                    .ok_or_else(|| Error::NoDensity(format!("stationary law {pi:?} has no density")))?;
                let u = match base {
                    BaseKernel::Resampling => pi_y,
                    BaseKernel::Ar1 { alpha: a, sigma } => NoiseSpec::Gaussian { sigma: *sigma }.pdf(y - a * x),
                    BaseKernel::Finite(_) => unreachable!("finite base handled above"),
                };
                Ok(alpha * pi_y + (1.0 - alpha) * u)
            }
            _ => unreachable!("finite chains handled above"),
        }
    }

    pub(crate) fn sample_initial<R: Rng + ?Sized>(&self, initial: &InitialLaw, rng: &mut R) -> Result<f64> {
        if self.num_states().is_some() {
            return match initial {
                InitialLaw::Point(x) => Ok(self.check_state(*x)? as f64),
                InitialLaw::Stationary => Ok(sample_discrete(self.stationary_vector().expect("finite"), rng) as f64),
                InitialLaw::Law(d) => Err(Error::UnsupportedInitialLaw(format!(
                    "continuous law {d:?} on a finite state space"
                ))),
            };
        }
        match initial {
            InitialLaw::Point(x) if x.is_finite() => Ok(*x),
            InitialLaw::Point(x) => Err(Error::UnsupportedInitialLaw(format!("point mass at {x}"))),
            InitialLaw::Law(d) => {
                d.validate()?;
                Ok(d.sample(rng))
            }
            InitialLaw::Stationary => match (&self.kind, self.stationary_distribution()) {
                (_, Some(d)) => Ok(d.sample(rng)),
                (ModelKind::Ar1 { alpha, noise, .. }, None) => {
                    // Burn in until the initial condition is forgotten to f64 precision.
                    let steps = if *alpha == 0.0 {
                        1
                    } else {
                        ((1e-17f64).ln() / alpha.abs().ln()).ceil() as usize
                    };
                    let mut x = 0.0;
                    for _ in 0..steps {
                        x = alpha * x + noise.sample(rng);
                    }
                    Ok(x)
                }
                _ => Err(Error::UnsupportedInitialLaw("stationary law unavailable".into())),
            },
        }
    }

    pub(crate) fn step<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        match &self.kind {
            ModelKind::Ar1 { alpha, noise, .. } => alpha * x + noise.sample(rng),
            ModelKind::FiniteState { matrix, .. } => sample_discrete(&matrix[x as usize], rng) as f64,
            ModelKind::Knudsen { alpha, base, pi } => {
                let resample = *alpha >= 1.0 || rng.random::<f64>() < *alpha;
                if resample {
                    return match pi {
                        StationaryLaw::Continuous(d) => d.sample(rng),
                        StationaryLaw::Discrete(p) => sample_discrete(p, rng) as f64,
                    };
                }
                match (base, pi) {
                    (BaseKernel::Resampling, StationaryLaw::Continuous(d)) => d.sample(rng),
                    (BaseKernel::Resampling, StationaryLaw::Discrete(p)) => sample_discrete(p, rng) as f64,
                    (BaseKernel::Finite(u), _) => sample_discrete(&u[x as usize], rng) as f64,
                    (BaseKernel::Ar1 { alpha: a, sigma }, _) => {
                        a * x + NoiseSpec::Gaussian { sigma: *sigma }.sample(rng)
                    }
                }
            }
        }
    }

    /// Draws `x_0` and then `n` transitions, writing into `out`.
    pub(crate) fn fill_path<R: Rng + ?Sized>(
        &self,
        initial: &InitialLaw,
        rng: &mut R,
        out: &mut Vec<f64>,
        n: usize,
    ) -> Result<()> {
        out.clear();
        let mut x = self.sample_initial(initial, rng)?;
        out.push(x);
        for _ in 0..n {
            x = self.step(x, rng);
            out.push(x);
        }
        Ok(())
    }
}

fn check_knudsen_alpha(alpha: f64) -> Result<()> {
    // alpha = 1 is the degenerate pure-resampling chain.
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("model.alpha", "Knudsen alpha must lie in (0, 1]"))
    }
}

fn check_stochastic(matrix: &[Vec<f64>]) -> Result<()> {
    let n = matrix.len();
    if n == 0 {
        return Err(Error::param("model.transition", "transition matrix is empty"));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return Err(Error::param("model.transition", format!("row {i} has length {} != {n}", row.len())));
        }
        if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::param("model.transition", format!("row {i} has a negative entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::param("model.transition", format!("row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

fn check_stationary(matrix: &[Vec<f64>], pi: &[f64]) -> Result<()> {
    let n = matrix.len();
    if pi.len() != n || pi.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::param("model.stationary", "stationary vector must be a probability vector"));
    }
    let mass: f64 = pi.iter().sum();
    if (mass - 1.0).abs() > STATIONARY_TOL {
        return Err(Error::param("model.stationary", format!("stationary vector sums to {mass}")));
    }
    for j in 0..n {
        let pj: f64 = (0..n).map(|i| pi[i] * matrix[i][j]).sum();
        if (pj - pi[j]).abs() > STATIONARY_TOL {
            return Err(Error::param("model.stationary", format!("pi P differs from pi at state {j}")));
        }
    }
    Ok(())
}

/// Solves `π(P − I) = 0`, `Σπ = 1`.
fn stationary_vector(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = matrix.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = matrix[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::param("model.transition", "chain has no unique stationary law"))?;
    let pi: Vec<f64> = pi.iter().map(|p| p.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.iter().map(|p| p / s).collect();
    check_stationary(matrix, &pi)?;
    Ok(pi)
}

fn sample_discrete<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// `x_0, …, x_n` of the chain; a pure function of the arguments.
pub fn sample_path(model: &MarkovModel, initial: &InitialLaw, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(n + 1);
    model.fill_path(initial, &mut rng, &mut path, n)?;
    Ok(path)
}

/// Density of the transition from `x` to `y`.
pub fn transition_density(model: &MarkovModel, x: f64, y: f64) -> Result<f64> {
    model.transition_density(x, y)
}
