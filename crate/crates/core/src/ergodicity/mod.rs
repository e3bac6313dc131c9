//! Multiplicative ergodicity `L⁽ⁿ⁾(γ) ≈ A(γ)ρ(γ)ⁿ`: amplitude, geometric
//! error fit, critical tilt `ν` and the constant `C_ν`, plus the Knudsen
//! fixed-point equation and the bounded-jump counterexample.

mod counterexample;
mod knudsen;

pub use counterexample::{counterexample_demo, CounterexampleRow, CounterexampleSpec};
pub use knudsen::{
    knudsen_chain, knudsen_lambda, knudsen_nu_criterion, GridChain, IidChain, KnudsenLambda, LambdaMethod,
    LambdaStatus, NuCriterion, UChain,
};

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{InitialLaw, MarkovModel};
use crate::laplace::{generating_function, LaplaceStream, SeriesStatus, Source};
use crate::operator::{
    discretize, perron, r_derivative, GridLaw, GridSpec, PerronSettings, SpectralTriple, TiltedOperator,
};

/// `A(γ) = μ(e^{−γξ} Π_γ 1) = [π_γ(1)/π_γ(φ)] μ(e^{−γξ}φ)`.
pub fn amplitude(op: &TiltedOperator, triple: &SpectralTriple, law: &GridLaw) -> Result<f64> {
    if !(triple.r > 0.0) {
        return Err(Error::Precondition("amplitude needs r(γ) > 0".into()));
    }
    let ones = vec![1.0; triple.phi.len()];
    let scale = triple.pair(&ones) / triple.pair(&triple.phi);
    let a = scale * law.tilted_pairing(op, &triple.phi, triple.r);
    if a > 0.0 {
        Ok(a)
    } else {
        Err(Error::NotPositive(format!("A({}) = {a:e}", op.gamma())))
    }
}

/// Laplace transforms at one tilt with the spectral data they are fitted against.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInput {
    pub series: Vec<f64>,
    pub amplitude: f64,
    pub rho: f64,
    /// Relative uncertainty of `ρ` and `A`; the residual of `Aρⁿ` can drift
    /// by about `n` times this much, so such residuals are not fitted.
    pub rel_error: f64,
}

impl FitInput {
    pub fn new(series: Vec<f64>, amplitude: f64, rho: f64) -> Self {
        FitInput {
            series,
            amplitude,
            rho,
            rel_error: 0.0,
        }
    }

    /// Uses the eigen-residuals of `triple` as the uncertainty of `ρ` and `A`.
    pub fn from_triple(series: Vec<f64>, amplitude: f64, triple: &SpectralTriple) -> Self {
        FitInput {
            series,
            amplitude,
            rho: triple.r,
            rel_error: (triple.residual + triple.left_residual) / triple.r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicityFit {
    pub m: f64,
    pub theta: f64,
    /// Residuals used in the regression.
    pub points: usize,
    /// True when residuals sat at the noise floor and `θ` came from spectral data.
    pub spectral_fallback: bool,
}

/// Relative size below which `|L⁽ⁿ⁾ − Aρⁿ|` is treated as rounding noise.
const NOISE_FLOOR: f64 = 1e-13;
const MIN_HORIZONS: usize = 8;

/// Fits `|L⁽ⁿ⁾ − Aρⁿ| ≤ M(ρθ)ⁿ` jointly over the supplied tilts: least squares
/// of `log|L⁽ⁿ⁾ − Aρⁿ| − n log ρ` against `log M + n log θ`, then the smallest
/// `M` covering every residual at the fitted `θ`. `spectral_theta`
/// (`sub_modulus / r`) is used when fewer than three residuals clear the
/// noise floor.
pub fn fit_mult_ergodicity(inputs: &[FitInput], spectral_theta: f64) -> Result<ErgodicityFit> {
    if inputs.is_empty() {
        return Err(Error::param("fit", "no tilts supplied"));
    }
    let mut pts: Vec<(f64, f64, f64)> = Vec::new(); // (n, log e_n − n log ρ, log ρ)
    for inp in inputs {
        if inp.series.len() < MIN_HORIZONS {
            return Err(Error::param("fit", format!("need at least {MIN_HORIZONS} horizons per tilt")));
        }
        if !(inp.rho > 0.0) {
            return Err(Error::Precondition("fit needs ρ(γ) > 0 on the compact".into()));
        }
        for (n, &l) in inp.series.iter().enumerate() {
            let main = inp.amplitude * inp.rho.powi(n as i32);
            let e = (l - main).abs();
            let floor = (NOISE_FLOOR + (n + 1) as f64 * inp.rel_error) * (l.abs() + main.abs());
            if e > floor && e > 0.0 {
                pts.push((n as f64, e.ln() - n as f64 * inp.rho.ln(), inp.rho.ln()));
            }
        }
    }
    let distinct = {
        let mut ns: Vec<u64> = pts.iter().map(|p| p.0 as u64).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.len()
    };
    let cover = |theta: f64| {
        pts.iter()
            .map(|&(n, y, _)| (y - n * theta.ln()).exp())
            .fold(f64::EPSILON, f64::max)
    };
    if distinct < 3 {
        if !(spectral_theta < 1.0) {
            return Err(Error::ErgodicityViolated(format!("spectral θ = {spectral_theta}")));
        }
        let theta = spectral_theta.max(f64::MIN_POSITIVE);
        return Ok(ErgodicityFit {
            m: cover(theta),
            theta,
            points: pts.len(),
            spectral_fallback: true,
        });
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / k, sy / k);
    let (sxx, sxy) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx).powi(2), b + (p.0 - mx) * (p.1 - my)));
    let theta = (sxy / sxx).exp();
    if !(theta < 1.0) {
        return Err(Error::ErgodicityViolated(format!(
            "residuals |L^(n) − Aρ^n| / ρ^n do not decay (fitted θ = {theta:.6})"
        )));
    }
    Ok(ErgodicityFit {
        m: cover(theta),
        theta,
        points: pts.len(),
        spectral_fallback: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuOutcome {
    Finite { nu: f64, r_at_nu: f64, iterations: usize },
    /// `r(∞) ≥ 1/λ`.
    Infinite { r_infinity: f64 },
}

impl NuOutcome {
    pub fn nu(&self) -> Option<f64> {
        match self {
            NuOutcome::Finite { nu, .. } => Some(*nu),
            NuOutcome::Infinite { .. } => None,
        }
    }
}

pub const NU_TOL: f64 = 1e-8;
pub const NU_MAX_ITER: usize = 60;

/// `ν = inf{γ > 0 : r(γ) < 1/λ}` by bisection on a shared grid. Without a
/// bracket one is found by doubling from `[0, 1]`.
pub fn solve_nu(
    op0: &TiltedOperator,
    lambda: f64,
    bracket: Option<(f64, f64)>,
    tol: f64,
    settings: &PerronSettings,
) -> Result<NuOutcome> {
    if !(lambda > 1.0) {
        return Err(Error::param("solve.lambda", "critical tilt needs lambda > 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("solve.tol", "root tolerance must be positive"));
    }
    let level = 1.0 / lambda;
    let r = |g: f64| -> Result<f64> { Ok(perron(&op0.retilt(g)?, settings)?.r) };
    let r_inf = r(f64::INFINITY)?;
    if r_inf >= level {
        return Ok(NuOutcome::Infinite { r_infinity: r_inf });
    }
    let (mut lo, mut hi) = match bracket {
        Some((lo, hi)) => {
            if !(0.0 <= lo && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidBracket(format!("[{lo}, {hi}] is not an interval in [0, ∞)")));
            }
            let (rl, rh) = (r(lo)?, r(hi)?);
            if !(rl > level && level > rh) {
                return Err(Error::InvalidBracket(format!(
                    "need r({lo}) > {level} > r({hi}), got {rl} and {rh}"
                )));
            }
            (lo, hi)
        }
        None => {
            let mut hi = 1.0;
            while r(hi)? >= level {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::InvalidBracket("no tilt below 1e12 brings r under the level".into()));
                }
            }
            (if hi > 1.0 { hi / 2.0 } else { 0.0 }, hi)
        }
    };
    let mut iterations = 0;
    while hi - lo > tol && iterations < NU_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if r(mid)? < level {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let nu = 0.5 * (lo + hi);
    Ok(NuOutcome::Finite {
        nu,
        r_at_nu: r(nu)?,
        iterations,
    })
}

/// Exact Laplace stream when a closed form exists, otherwise the discretized operator.
pub fn laplace_stream(model: &MarkovModel, initial: &InitialLaw, gamma: f64, grid: &GridSpec) -> Result<LaplaceStream> {
    match LaplaceStream::oracle(model, initial, gamma) {
        Ok(s) => Ok(s),
        Err(Error::OracleMismatch(_)) => {
            let op = discretize(model, gamma, grid)?;
            let law = op.law(initial)?;
            Ok(LaplaceStream::operator(Arc::new(op), law))
        }
        Err(e) => Err(e),
    }
}

/// Offsets `h/ν` used by the direct limit.
pub const CNU_OFFSETS: [f64; 3] = [0.1, 0.05, 0.025];
/// Relative disagreement between the two routes above which a warning is raised.
pub const CNU_WARNING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CNu {
    pub formula: f64,
    /// Richardson-extrapolated `lim_{γ↓ν} (γ−ν)/γ · g(γ, λ)`; `None` if a series failed to converge.
    pub direct: Option<f64>,
    pub discrepancy: Option<f64>,
    pub a_nu: f64,
    pub r_prime_nu: f64,
    pub warning: bool,
    pub direct_source: Source,
}

/// `C_ν = −A(ν)/(λ ν r′(ν))` together with the direct limit through the generating function.
#[allow(clippy::too_many_arguments)]
pub fn c_nu(
    model: &MarkovModel,
    initial: &InitialLaw,
    op0: &TiltedOperator,
    nu: f64,
    lambda: f64,
    settings: &PerronSettings,
    series_tol: f64,
    n_max: usize,
) -> Result<CNu> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Precondition("C_ν needs a finite positive ν".into()));
    }
    let op = op0.retilt(nu)?;
    let triple = perron(&op, settings)?;
    let rp = r_derivative(&op, &triple)?;
    if !(rp < 0.0) {
        return Err(Error::Precondition(format!("r′(ν) = {rp} is not negative")));
    }
    let law = op.law(initial)?;
    let a = amplitude(&op, &triple, &law)?;
    let formula = -a / (lambda * nu * rp);

    let samples: Vec<Result<(Option<f64>, Source)>> = CNU_OFFSETS
        .par_iter()
        .map(|&c| {
            let h = c * nu;
            let gamma = nu + h;
            let mut stream = match LaplaceStream::oracle(model, initial, gamma) {
                Ok(s) => s,
                Err(Error::OracleMismatch(_)) => {
                    let op = op0.retilt(gamma)?;
                    let law = op.law(initial)?;
                    LaplaceStream::operator(Arc::new(op), law)
                }
                Err(e) => return Err(e),
            };
            let source = stream.source();
            let g = generating_function(|_| Ok(stream.next_value()), gamma, lambda, series_tol, n_max)?;
            Ok((
                (g.status == SeriesStatus::Finite).then(|| h / gamma * g.value.expect("finite")),
                source,
            ))
        })
        .collect();
    let mut values = Vec::with_capacity(3);
    let mut direct_source = Source::Operator;
    for s in samples {
        let (v, src) = s?;
        values.push(v);
        direct_source = src;
    }
    let direct = match values[..] {
        [Some(f1), Some(f2), Some(f3)] => {
            let r1 = 2.0 * f2 - f1;
            let r2 = 2.0 * f3 - f2;
            Some((4.0 * r2 - r1) / 3.0)
        }
        _ => None,
    };
    let discrepancy = direct.map(|d| ((d - formula) / formula).abs());
    Ok(CNu {
        formula,
        direct,
        discrepancy,
        a_nu: a,
        r_prime_nu: rp,
        warning: discrepancy.is_none_or(|d| d > CNU_WARNING),
        direct_source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub gamma: f64,
    pub rho: f64,
    pub a: f64,
    pub r_prime: f64,
    pub sub_modulus: f64,
    pub residual: f64,
    /// `L⁽ⁿ⁺¹⁾/L⁽ⁿ⁾` at a large horizon from an independent exact source.
    pub rho_independent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSettings {
    pub grid: GridSpec,
    pub perron: PerronSettings,
    pub lambda: f64,
    pub nu_bracket: Option<(f64, f64)>,
    pub nu_tol: f64,
    pub series_tol: f64,
    pub series_max: usize,
    /// Horizons used by the ergodicity fit.
    pub fit_horizon: usize,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            grid: GridSpec::default(),
            perron: PerronSettings::default(),
            lambda: 2.0,
            nu_bracket: None,
            nu_tol: NU_TOL,
            series_tol: crate::laplace::DEFAULT_SERIES_TOL,
            series_max: 100_000,
            fit_horizon: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityReport {
    pub rows: Vec<ReportRow>,
    pub fit: Option<ErgodicityFit>,
    pub nu: NuOutcome,
    pub c_nu: Option<CNu>,
    pub initial_law: String,
    /// Disagreements and failed checks, reported rather than resolved.
    pub statuses: Vec<String>,
}

const INDEPENDENT_HORIZON: usize = 200;

/// Spectral data at every tilt plus `ν`, `C_ν` and the `(M, θ)` fit, each
/// cross-checked against an exact Laplace source where one exists.
pub fn build_report(
    model: &MarkovModel,
    initial: &InitialLaw,
    gammas: &[f64],
    settings: &ReportSettings,
) -> Result<ErgodicityReport> {
    let op0 = discretize(model, 0.0, &settings.grid)?;
    let mut statuses = Vec::new();
    let per_gamma: Vec<Result<(ReportRow, Option<FitInput>, f64)>> = gammas
        .par_iter()
        .map(|&gamma| {
            let op = op0.retilt(gamma)?;
            let t = perron(&op, &settings.perron)?;
            let law = op.law(initial)?;
            let (a, rp) = if t.r > 0.0 && gamma.is_finite() {
                (amplitude(&op, &t, &law)?, r_derivative(&op, &t)?)
            } else {
                (0.0, f64::NAN)
            };
            let oracle = if gamma.is_finite() { LaplaceStream::oracle(model, initial, gamma).ok() } else { None };
            // The fit uses the operator's own series so that A and ρ are consistent with it.
            let fit = (t.r > 0.0 && gamma > 0.0 && gamma.is_finite()).then(|| {
                FitInput::from_triple(
                    op.laplace_series(&law).take(settings.fit_horizon.max(MIN_HORIZONS)).collect(),
                    a,
                    &t,
                )
            });
            let rho_independent = oracle.and_then(|mut s| {
                let tail = s.take_values(INDEPENDENT_HORIZON + 2);
                let (l0, l1) = (tail[INDEPENDENT_HORIZON], tail[INDEPENDENT_HORIZON + 1]);
                (l0 > 0.0).then(|| l1 / l0)
            });
            Ok((
                ReportRow {
                    gamma,
                    rho: t.r,
                    a,
                    r_prime: rp,
                    sub_modulus: t.sub_modulus,
                    residual: t.residual,
                    rho_independent,
                },
                fit,
                t.gap_ratio(),
            ))
        })
        .collect();
    let mut rows = Vec::with_capacity(gammas.len());
    let mut fit_inputs = Vec::new();
    let mut theta_spec = 0.0f64;
    for item in per_gamma {
        let (row, fit, theta) = item?;
        if let Some(f) = fit {
            fit_inputs.push(f);
            theta_spec = theta_spec.max(theta);
        }
        rows.push(row);
    }
    for w in rows.windows(2) {
        if w[1].gamma > w[0].gamma && w[1].rho > w[0].rho + 1e-12 {
            statuses.push(format!("rho increases between γ = {} and γ = {}", w[0].gamma, w[1].gamma));
        }
    }
    for row in &rows {
        if let Some(ri) = row.rho_independent {
            if (ri - row.rho).abs() > 1e-4 {
                statuses.push(format!("rho mismatch at γ = {}: spectral {} vs Laplace ratio {}", row.gamma, row.rho, ri));
            }
        }
        if row.gamma > 0.0 && row.gamma.is_finite() && row.rho > 0.0 && !(row.r_prime < 0.0) {
            statuses.push(format!("r′ not negative at γ = {}", row.gamma));
        }
    }
    let fit = if fit_inputs.is_empty() {
        None
    } else {
        match fit_mult_ergodicity(&fit_inputs, theta_spec) {
            Ok(f) => Some(f),
            Err(e) => {
                statuses.push(e.to_string());
                None
            }
        }
    };
    let nu = solve_nu(&op0, settings.lambda, settings.nu_bracket, settings.nu_tol, &settings.perron)?;
    let c = match nu {
        NuOutcome::Finite { nu, .. } => {
            match c_nu(model, initial, &op0, nu, settings.lambda, &settings.perron, settings.series_tol, settings.series_max) {
                Ok(c) => {
                    if c.warning {
                        statuses.push(format!(
                            "C_nu routes disagree: formula {} vs direct {:?}",
                            c.formula, c.direct
                        ));
                    }
                    Some(c)
                }
                Err(e) => {
                    statuses.push(format!("C_nu unavailable: {e}"));
                    None
                }
            }
        }
        NuOutcome::Infinite { .. } => None,
    };
    Ok(ErgodicityReport {
        rows,
        fit,
        nu,
        c_nu: c,
        initial_law: initial.to_string(),
        statuses,
    })
}
