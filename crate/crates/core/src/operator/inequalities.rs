//! Grid checks of the drift, continuity and Doeblin–Fortet inequalities.

use super::{discretize, tilt_factor, GridSpec, TiltedOperator};
use crate::error::{Error, Result};
use crate::kernels::{MarkovModel, ModelKind, StationaryLaw, WeightFunction};
use crate::quadrature::integrate;

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub holds: bool,
    /// Smallest `L` with `P_γV ≤ e^{−γβ}δV + L` on the grid.
    pub l_constant: f64,
    /// `P_γV / V` at the outermost grid node.
    pub leading_coefficient: f64,
    /// `sup_{ξ=0} V` over the grid, the bound on `P_∞V`; `None` if `ξ` has no zero on the grid.
    pub zero_set_bound: Option<f64>,
}

/// Checks `P_γV ≤ e^{−γβ}δV + L` for an autoregressive model, `V = (1+|x|)^{r0}`.
pub fn drift_check(model: &MarkovModel, gamma: f64, beta: f64, delta: f64, grid: &GridSpec) -> Result<DriftReport> {
    let ModelKind::Ar1 { alpha, noise, r0 } = model.kind() else {
        return Err(Error::Precondition("drift check applies to autoregressive models".into()));
    };
    let (alpha, noise, r0) = (*alpha, *noise, *r0);
    if !(delta > alpha.abs().powf(r0)) {
        return Err(Error::Precondition(format!(
            "δ = {delta} must exceed |α|^r0 = {}",
            alpha.abs().powf(r0)
        )));
    }
    if !(gamma >= 0.0) || !(beta > 0.0) {
        return Err(Error::param("gamma", "need γ ≥ 0 and β > 0"));
    }
    // Reuse the Nyström grid of the model.
    let op = discretize(model, 0.0, &GridSpec { n: grid.n.max(2), ..*grid })?;
    let v = WeightFunction::new(r0, 1.0)?;
    let h = noise.half_width(1e-14);
    let coefficient = if gamma.is_finite() { (-gamma * beta).exp() * delta } else { 0.0 };
    let mut l_constant = 0.0f64;
    let mut leading = 0.0;
    let nodes = op.nodes();
    for (i, &x) in nodes.iter().enumerate() {
        let mean = alpha * x;
        let pv = integrate(
            |y| {
                let z = mean + y;
                let xi = model.xi(z).unwrap_or(f64::INFINITY);
                tilt_factor(gamma, xi) * v.eval(z) * noise.pdf(y)
            },
            -h,
            h,
            64,
            16,
        );
        l_constant = l_constant.max(pv - coefficient * v.eval(x));
        if i == nodes.len() - 1 {
            leading = pv / v.eval(x);
        }
    }
    let zero_set_bound = nodes
        .iter()
        .filter(|&&x| model.xi(x).map(|v| v == 0.0).unwrap_or(false))
        .map(|&x| v.eval(x))
        .reduce(f64::max);
    Ok(DriftReport {
        holds: l_constant.is_finite(),
        l_constant: l_constant.max(0.0),
        leading_coefficient: leading,
        zero_set_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityReport {
    /// `‖K(γ) − K(γ′)‖` from `C_{V^a}` to `C_{V^{a+b}}`.
    pub norm: f64,
    /// `‖K(0)‖` from `C_{V^a}` to `C_{V^{a+b}}`.
    pub k0_cross_norm: f64,
    /// `‖K(0)‖` on `C_{V^{a+b}}`.
    pub k0_norm: f64,
    /// `sup ξ/V`.
    pub c: f64,
    /// `(c|γ−γ′|)^b ‖K(0)‖_{V^{a+b}}`.
    pub bound: f64,
}

impl ContinuityReport {
    pub fn within_bound(&self) -> bool {
        self.norm <= self.bound * (1.0 + 1e-12)
    }
}

fn cross_norm(rows: impl Fn(usize, usize) -> f64, nodes: &[f64], from: WeightFunction, to: WeightFunction) -> f64 {
    let n = nodes.len();
    (0..n)
        .map(|i| (0..n).map(|j| rows(i, j).abs() * from.eval(nodes[j])).sum::<f64>() / to.eval(nodes[i]))
        .fold(0.0, f64::max)
}

/// Discretized operator norm of `K(γ) − K(γ′)` between weighted spaces.
pub fn continuity_modulus(
    model: &MarkovModel,
    grid: &GridSpec,
    gamma: f64,
    gamma_prime: f64,
    a: f64,
    b: f64,
) -> Result<ContinuityReport> {
    if !(a >= 0.0 && b > 0.0 && a + b <= 1.0) {
        return Err(Error::param("exponents", "need 0 ≤ a < a + b ≤ 1"));
    }
    if !(gamma.is_finite() && gamma_prime.is_finite()) {
        return Err(Error::param("gamma", "continuity is measured between finite tilts"));
    }
    let c = model.observable().growth(model.r0()).ratio_bound.ok_or_else(|| {
        Error::Precondition("observable has no known bound on sup ξ/V".into())
    })?;
    let k0: TiltedOperator = discretize(model, 0.0, grid)?;
    let kg = k0.retilt(gamma)?;
    let kh = k0.retilt(gamma_prime)?;
    let v = WeightFunction::new(model.r0(), 1.0)?;
    let (va, vab) = (v.with_exponent(a), v.with_exponent(a + b));
    let nodes = k0.nodes();
    let norm = cross_norm(|i, j| kg.matrix()[(i, j)] - kh.matrix()[(i, j)], nodes, va, vab);
    let k0_cross_norm = cross_norm(|i, j| k0.matrix()[(i, j)], nodes, va, vab);
    let k0_norm = cross_norm(|i, j| k0.matrix()[(i, j)], nodes, vab, vab);
    Ok(ContinuityReport {
        norm,
        k0_cross_norm,
        k0_norm,
        c,
        bound: (c * (gamma - gamma_prime).abs()).powf(b) * k0_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoeblinFortet {
    /// `‖K(γ)f‖_a` in `L^a(π)`.
    pub lhs: f64,
    /// `(1−α)‖f‖_a + α‖f‖₁`.
    pub rhs: f64,
}

impl DoeblinFortet {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12)
    }
}

fn lp_norm(pi: &[f64], f: &[f64], a: f64) -> f64 {
    pi.iter().zip(f).map(|(p, f)| p * f.abs().powf(a)).sum::<f64>().powf(1.0 / a)
}

/// Both sides of `‖K(γ)f‖_a ≤ (1−α)‖f‖_a + α‖f‖₁` for a finite Knudsen chain.
pub fn doeblin_fortet(op: &TiltedOperator, f: &[f64], a: f64) -> Result<DoeblinFortet> {
    let ModelKind::Knudsen {
        alpha,
        pi: StationaryLaw::Discrete(pi),
        ..
    } = op.model().kind()
    else {
        return Err(Error::Precondition("Doeblin–Fortet check applies to finite Knudsen chains".into()));
    };
    if f.len() != op.len() {
        return Err(Error::param("f", "length must match the state space"));
    }
    if !(a >= 1.0) {
        return Err(Error::param("a", "L^a exponent must be at least 1"));
    }
    let kf: Vec<f64> = (0..op.len())
        .map(|i| (0..op.len()).map(|j| op.matrix()[(i, j)] * f[j]).sum())
        .collect();
    Ok(DoeblinFortet {
        lhs: lp_norm(pi, &kf, a),
        rhs: (1.0 - alpha) * lp_norm(pi, f, a) + alpha * lp_norm(pi, f, 1.0),
    })
}
