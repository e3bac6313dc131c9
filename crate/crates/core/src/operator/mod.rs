//! Finite discretizations of the tilted kernels `P_γ(x, dy) = e^{−γξ(y)} P(x, dy)`.
//!
//! Continuous-state kernels are discretized by the Nyström method on a
//! Gauss–Legendre grid over a truncated interval; finite chains are used as
//! they are. The discretized kernel is stored once, untilted, as a row
//! stochastic matrix `B`; the tilt enters as the column scaling
//! `K = B · diag(e^{−γξ(x_j)})`. Operators built from one another with
//! [`TiltedOperator::retilt`] share their grid, so `K(γ′) ≤ K(γ)` holds
//! entrywise and exactly for `γ′ > γ`.

mod inequalities;
mod perron;

pub use inequalities::{
    continuity_modulus, doeblin_fortet, drift_check, ContinuityReport, DoeblinFortet, DriftReport,
};
pub use perron::{
    perron, perron_matrix, projector_apply, r_derivative, PerronSettings, SpectralTriple,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{
    standard_normal_quantile, BaseKernel, DistributionSpec, InitialLaw, MarkovModel, ModelKind,
    NoiseSpec, StationaryLaw, WeightFunction,
};
use crate::quadrature::gauss_legendre;

/// Stationary tail mass left outside the default truncation interval.
pub const DEFAULT_TAIL_MASS: f64 = 1e-8;
/// Largest stationary mass a user-chosen interval may leave out.
pub const MAX_TAIL_MASS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Number of quadrature nodes (ignored for finite chains).
    pub n: usize,
    /// Half-width of the truncation interval; `None` picks it from the
    /// stationary tail mass.
    pub xmax: Option<f64>,
    /// Exponent `a` of the weight `V^a` used for reported norms.
    pub weight_exponent: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: 400,
            xmax: None,
            weight_exponent: 1.0,
        }
    }
}

impl GridSpec {
    pub fn with_n(n: usize) -> Self {
        GridSpec { n, ..Default::default() }
    }

    pub fn with_xmax(mut self, xmax: f64) -> Self {
        self.xmax = Some(xmax);
        self
    }
}

/// Discretized `P_γ`; immutable after construction.
#[derive(Debug, Clone)]
pub struct TiltedOperator {
    gamma: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    xi: Vec<f64>,
    tilt: Vec<f64>,
    base: DMatrix<f64>,
    matrix: DMatrix<f64>,
    weight: WeightFunction,
    interval: (f64, f64),
    model: MarkovModel,
}

/// Tilt factor `e^{−γξ}`, with `γ = ∞` meaning the indicator of `{ξ = 0}`.
pub fn tilt_factor(gamma: f64, xi: f64) -> f64 {
    if gamma == f64::INFINITY {
        if xi == 0.0 {
            1.0
        } else {
            0.0
        }
    } else if gamma == 0.0 {
        1.0
    } else {
        (-gamma * xi).exp()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && !gamma.is_nan() {
        Ok(())
    } else {
        Err(Error::param("gamma", format!("tilt must lie in [0, inf], got {gamma}")))
    }
}

/// Truncation interval carrying all but `tail` of the stationary mass.
pub fn default_interval(model: &MarkovModel, tail: f64) -> Option<(f64, f64)> {
    match model.kind() {
        ModelKind::Ar1 { alpha, noise, .. } => {
            let h = match noise {
                NoiseSpec::Gaussian { sigma } => {
                    sigma / (1.0 - alpha * alpha).sqrt() * standard_normal_quantile(1.0 - 0.5 * tail)
                }
                // |X| <= sum |alpha|^k |noise_k|; scale the noise quantile accordingly.
                _ => noise.half_width(tail) / (1.0 - alpha.abs()),
            };
            Some((-h, h))
        }
        ModelKind::Knudsen {
            pi: StationaryLaw::Continuous(pi),
            ..
        } => Some(pi.support(tail)),
        _ => None,
    }
}

fn stationary_mass(model: &MarkovModel, lo: f64, hi: f64) -> Option<f64> {
    model.stationary_distribution().map(|d| d.mass_in(lo, hi))
}

fn interval_for(model: &MarkovModel, grid: &GridSpec) -> Result<(f64, f64)> {
    let default = default_interval(model, DEFAULT_TAIL_MASS).expect("continuous model");
    let Some(xmax) = grid.xmax else {
        return Ok(default);
    };
    if !(xmax > 0.0 && xmax.is_finite()) {
        return Err(Error::param("domain.xmax", "xmax must be positive"));
    }
    let (lo, hi) = match model.kind() {
        ModelKind::Knudsen {
            pi: StationaryLaw::Continuous(DistributionSpec::Exponential { .. }),
            ..
        } => (0.0, xmax),
        ModelKind::Knudsen {
            pi: StationaryLaw::Continuous(DistributionSpec::Uniform { low, high }),
            ..
        } => (*low, *high),
        _ => (-xmax, xmax),
    };
    let required = default.1.abs().max(default.0.abs());
    let enough = match stationary_mass(model, lo, hi) {
        Some(mass) => mass >= 1.0 - MAX_TAIL_MASS,
        None => {
            let (_, h) = default_interval(model, MAX_TAIL_MASS).expect("continuous model");
            xmax >= h
        }
    };
    if !enough {
        return Err(Error::GridTooSmall { lo, hi, required });
    }
    Ok((lo, hi))
}

/// Rows `w_j k(x, x_j) / Σ_l w_l k(x, x_l)`.
fn normalized_row(nodes: &[f64], weights: &[f64], density: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut row: Vec<f64> = nodes.iter().zip(weights).map(|(&y, &w)| w * density(y)).collect();
    let z: f64 = row.iter().sum();
    if z > 0.0 {
        row.iter_mut().for_each(|v| *v /= z);
    }
    row
}

/// Untilted kernel row at an arbitrary state `x` (Nyström extension).
fn base_row(model: &MarkovModel, nodes: &[f64], weights: &[f64], masses: Option<&[f64]>, x: f64) -> Vec<f64> {
    match model.kind() {
        ModelKind::Ar1 { alpha, noise, .. } => normalized_row(nodes, weights, |y| noise.pdf(y - alpha * x)),
        ModelKind::Knudsen { alpha, base, .. } => {
            let m = masses.expect("Knudsen masses");
            match base {
                BaseKernel::Resampling => m.to_vec(),
                BaseKernel::Ar1 { alpha: a, sigma } => {
                    let noise = NoiseSpec::Gaussian { sigma: *sigma };
                    let u = normalized_row(nodes, weights, |y| noise.pdf(y - a * x));
                    m.iter().zip(&u).map(|(m, u)| alpha * m + (1.0 - alpha) * u).collect()
                }
                BaseKernel::Finite(_) => unreachable!("finite chains use their matrix"),
            }
        }
        ModelKind::FiniteState { .. } => unreachable!("finite chains use their matrix"),
    }
}

impl TiltedOperator {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// `e^{−γξ(x_j)}` per node.
    pub fn tilt(&self) -> &[f64] {
        &self.tilt
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Untilted Markov matrix.
    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn weight(&self) -> WeightFunction {
        self.weight
    }

    pub fn model(&self) -> &MarkovModel {
        &self.model
    }

    /// Truncation interval (state range for finite chains).
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn xmax(&self) -> f64 {
        self.interval.0.abs().max(self.interval.1.abs())
    }

    /// `V^a` at every node.
    pub fn weight_values(&self) -> Vec<f64> {
        self.nodes.iter().map(|&x| self.weight.eval(x)).collect()
    }

    /// `sup_i |f_i| / V^a(x_i)`.
    pub fn weighted_norm(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(&self.nodes)
            .map(|(v, &x)| v.abs() / self.weight.eval(x))
            .fold(0.0, f64::max)
    }

    /// Same grid and kernel, different tilt.
    pub fn retilt(&self, gamma: f64) -> Result<TiltedOperator> {
        check_gamma(gamma)?;
        let tilt: Vec<f64> = self.xi.iter().map(|&xi| tilt_factor(gamma, xi)).collect();
        let matrix = tilted(&self.base, &tilt);
        Ok(TiltedOperator {
            gamma,
            tilt,
            matrix,
            ..self.clone()
        })
    }

    fn knudsen_masses(&self) -> Option<Vec<f64>> {
        match self.model.kind() {
            ModelKind::Knudsen {
                pi: StationaryLaw::Continuous(pi),
                ..
            } => Some(density_masses(&self.nodes, &self.weights, pi)),
            _ => None,
        }
    }

    /// Row of `K` at an arbitrary state `x` (a node index for finite chains).
    pub fn row_at(&self, x: f64) -> Result<Vec<f64>> {
        if self.model.num_states().is_some() {
            let i = state_index(x, self.len())?;
            return Ok(self.matrix.row(i).iter().copied().collect());
        }
        let masses = self.knudsen_masses();
        let row = base_row(&self.model, &self.nodes, &self.weights, masses.as_deref(), x);
        Ok(row.iter().zip(&self.tilt).map(|(b, t)| b * t).collect())
    }

    /// Stationary law as node masses.
    pub fn stationary_masses(&self) -> Result<Vec<f64>> {
        if let Some(pi) = self.model.stationary_vector() {
            return Ok(pi.to_vec());
        }
        if let Some(d) = self.model.stationary_distribution() {
            return Ok(density_masses(&self.nodes, &self.weights, &d));
        }
        // Stationary vector of the discretized chain.
        let (_, pi, ..) = perron::left_vector(&self.base, 1e-12, 100_000)?;
        Ok(pi)
    }

    /// Represents the initial law on the grid.
    pub fn law(&self, initial: &InitialLaw) -> Result<GridLaw> {
        let finite = self.model.num_states().is_some();
        match initial {
            InitialLaw::Stationary => Ok(GridLaw::Masses(self.stationary_masses()?)),
            InitialLaw::Point(x) if finite => {
                let i = state_index(*x, self.len())?;
                let mut m = vec![0.0; self.len()];
                m[i] = 1.0;
                Ok(GridLaw::Masses(m))
            }
            InitialLaw::Point(x) => self.point_law(*x),
            InitialLaw::Law(_) if finite => Err(Error::UnsupportedInitialLaw(
                "continuous law on a finite state space".into(),
            )),
            InitialLaw::Law(DistributionSpec::Dirac { at }) => self.point_law(*at),
            InitialLaw::Law(d) => {
                d.validate()?;
                let (lo, hi) = self.interval;
                if d.mass_in(lo, hi) < 1.0 - MAX_TAIL_MASS {
                    return Err(Error::UnsupportedInitialLaw(format!(
                        "{d:?} puts more than {MAX_TAIL_MASS:e} of its mass outside [{lo}, {hi}]"
                    )));
                }
                Ok(GridLaw::Masses(density_masses(&self.nodes, &self.weights, d)))
            }
        }
    }

    fn point_law(&self, x: f64) -> Result<GridLaw> {
        if !x.is_finite() {
            return Err(Error::UnsupportedInitialLaw(format!("point mass at {x}")));
        }
        Ok(GridLaw::Point {
            x,
            tilt: tilt_factor(self.gamma, self.model.xi(x)?),
            row: self.row_at(x)?,
        })
    }

    /// `μ(e^{−γξ} K^n 1)` for `n = 0, 1, …`, the discretized Laplace transforms.
    pub fn laplace_series(&self, law: &GridLaw) -> OperatorLaplace {
        OperatorLaplace::new(Arc::new(self.clone()), law.clone())
    }
}

/// Initial law as a functional on grid functions.
#[derive(Debug, Clone, PartialEq)]
pub enum GridLaw {
    /// Probability masses at the nodes.
    Masses(Vec<f64>),
    /// `δ_x` off the grid: `K`-row at `x` and `e^{−γξ(x)}`.
    Point { x: f64, tilt: f64, row: Vec<f64> },
}

impl GridLaw {
    /// `μ(e^{−γξ} f)` for a grid function `f`, with `f(x)` for a point mass
    /// obtained by Nyström interpolation through `K`: requires `r > 0`.
    pub fn tilted_pairing(&self, op: &TiltedOperator, f: &[f64], r: f64) -> f64 {
        match self {
            GridLaw::Masses(m) => m.iter().zip(op.tilt()).zip(f).map(|((m, t), f)| m * t * f).sum(),
            GridLaw::Point { tilt, row, .. } => {
                let kf: f64 = row.iter().zip(f).map(|(k, f)| k * f).sum();
                tilt * kf / r
            }
        }
    }
}

/// Iterator over `L⁽ⁿ⁾(γ)` computed from the discretized operator.
#[derive(Debug, Clone)]
pub struct OperatorLaplace {
    op: Arc<TiltedOperator>,
    law: GridLaw,
    h: DVector<f64>,
    n: usize,
    last: f64,
}

impl OperatorLaplace {
    pub fn new(op: Arc<TiltedOperator>, law: GridLaw) -> Self {
        let h = DVector::from_element(op.len(), 1.0);
        OperatorLaplace { op, law, h, n: 0, last: 1.0 }
    }

    /// `h ← min(Kh, h)`: `K` is substochastic, so `Kⁿ1` is non-increasing and
    /// the minimum only removes rounding.
    fn advance(&mut self) {
        let next = self.op.matrix() * &self.h;
        self.h = next.zip_map(&self.h, f64::min);
    }
}

impl Iterator for OperatorLaplace {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let (value, step) = match &self.law {
            GridLaw::Masses(m) => {
                let v: f64 = m
                    .iter()
                    .zip(self.op.tilt())
                    .zip(self.h.iter())
                    .map(|((m, t), h)| m * t * h)
                    .sum();
                (v, true)
            }
            GridLaw::Point { tilt, row, .. } => {
                if self.n == 0 {
                    (*tilt, false)
                } else {
                    let v: f64 = row.iter().zip(self.h.iter()).map(|(k, h)| k * h).sum();
                    (tilt * v, true)
                }
            }
        };
        if step {
            self.advance();
        }
        self.n += 1;
        // L⁽ⁿ⁾ is non-increasing in n and starts below 1.
        self.last = value.min(self.last);
        Some(self.last)
    }
}

fn state_index(x: f64, n: usize) -> Result<usize> {
    let i = x.round();
    if i < 0.0 || i as usize >= n || (x - i).abs() > 1e-9 {
        return Err(Error::param("state", format!("{x} is not a state of an {n}-state chain")));
    }
    Ok(i as usize)
}

fn density_masses(nodes: &[f64], weights: &[f64], d: &DistributionSpec) -> Vec<f64> {
    normalized_row(nodes, weights, |x| d.pdf(x).unwrap_or(0.0))
}

fn tilted(base: &DMatrix<f64>, tilt: &[f64]) -> DMatrix<f64> {
    let mut k = base.clone();
    for (j, mut col) in k.column_iter_mut().enumerate() {
        col *= tilt[j];
    }
    k
}

fn from_rows(rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    DMatrix::from_row_slice(n, n, &flat)
}

/// Builds the discretization of `P_γ` (`γ = f64::INFINITY` gives `P_∞`).
pub fn discretize(model: &MarkovModel, gamma: f64, grid: &GridSpec) -> Result<TiltedOperator> {
    check_gamma(gamma)?;
    let a = grid.weight_exponent;
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::param("domain.weight_exponent", "weight exponent must lie in (0, 1]"));
    }
    let weight = WeightFunction::new(model.r0(), a)?;

    let (nodes, weights, base, interval) = if let Some(p) = model.transition_matrix() {
        let n = p.len();
        let nodes: Vec<f64> = (0..n).map(|i| i as f64).collect();
        (nodes, vec![1.0; n], from_rows(p), (0.0, (n - 1) as f64))
    } else {
        if grid.n < 2 {
            return Err(Error::param("domain.n", "grid needs at least two nodes"));
        }
        let (lo, hi) = interval_for(model, grid)?;
        let (nodes, weights) = gauss_legendre(grid.n, lo, hi);
        let masses = match model.kind() {
            ModelKind::Knudsen {
                pi: StationaryLaw::Continuous(pi),
                ..
            } => {
                if !pi.has_density() {
                    return Err(Error::NoDensity(format!("stationary law {pi:?} has no density")));
                }
                Some(density_masses(&nodes, &weights, pi))
            }
            _ => None,
        };
        let rows: Vec<Vec<f64>> = nodes
            .par_iter()
            .map(|&x| base_row(model, &nodes, &weights, masses.as_deref(), x))
            .collect();
        (nodes, weights, from_rows(rows), (lo, hi))
    };

    let xi = nodes.iter().map(|&x| model.xi(x)).collect::<Result<Vec<f64>>>()?;
    let tilt: Vec<f64> = xi.iter().map(|&v| tilt_factor(gamma, v)).collect();
    let matrix = tilted(&base, &tilt);
    Ok(TiltedOperator {
        gamma,
        nodes,
        weights,
        xi,
        tilt,
        base,
        matrix,
        weight,
        interval,
        model: model.clone(),
    })
}
