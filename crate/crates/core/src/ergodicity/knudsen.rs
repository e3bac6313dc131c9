//! Knudsen kernels `P = απ + (1−α)U`: the scalar equation
//! `λ = α g_Z(γ, (1−α)/λ)` for the Perron eigenvalue, where `g_Z` is the
//! Laplace-generating function of the `U`-chain started from `π`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{BaseKernel, MarkovModel, ModelKind, StationaryLaw};
use crate::laplace::marginal_laplace;
use crate::operator::{discretize, perron_matrix, tilt_factor, GridSpec, PerronSettings};

/// The `U`-chain `(Z_n)` of a Knudsen kernel under `P_π`.
pub trait UChain: Send + Sync {
    /// `E_π[exp(−γ Σ_{k≤n} ξ(Z_k))]`, with `γ = ∞` giving `P_π(Σ_{k≤n} ξ(Z_k) = 0)`.
    fn laplace(&self, gamma: f64, n: usize) -> Result<f64>;
    /// Spectral radius of `Ũ_γ = h_γ U`.
    fn spectral_radius(&self, gamma: f64) -> Result<f64>;
    /// `g_Z(γ, x) = Σ xⁿ L_Z⁽ⁿ⁾(γ)`; `None` when the series diverges.
    fn generating(&self, gamma: f64, x: f64) -> Result<Option<f64>>;

    fn zero_mass(&self, n: usize) -> Result<f64> {
        self.laplace(f64::INFINITY, n)
    }
}

/// `U = π`: the `Z_n` are i.i.d. with law `π`.
#[derive(Debug, Clone)]
pub struct IidChain {
    model: MarkovModel,
}

impl IidChain {
    pub fn new(model: &MarkovModel) -> Result<Self> {
        marginal_laplace(model, 0.0)?;
        Ok(IidChain { model: model.clone() })
    }
}

impl UChain for IidChain {
    fn laplace(&self, gamma: f64, n: usize) -> Result<f64> {
        Ok(marginal_laplace(&self.model, gamma)?.powi(n as i32 + 1))
    }

    fn spectral_radius(&self, gamma: f64) -> Result<f64> {
        marginal_laplace(&self.model, gamma)
    }

    fn generating(&self, gamma: f64, x: f64) -> Result<Option<f64>> {
        let l = marginal_laplace(&self.model, gamma)?;
        Ok((x * l < 1.0).then(|| l / (1.0 - x * l)))
    }
}

/// `U` as a stochastic matrix with invariant masses `π` and observable values `ξ`.
#[derive(Debug, Clone)]
pub struct GridChain {
    u: DMatrix<f64>,
    pi: Vec<f64>,
    xi: Vec<f64>,
}

impl GridChain {
    pub fn new(u: DMatrix<f64>, pi: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        let n = u.nrows();
        if u.ncols() != n || pi.len() != n || xi.len() != n {
            return Err(Error::param("model.transition", "U, π and ξ sizes differ"));
        }
        Ok(GridChain { u, pi, xi })
    }

    fn tilt(&self, gamma: f64) -> Vec<f64> {
        self.xi.iter().map(|&v| tilt_factor(gamma, v)).collect()
    }

    fn ud(&self, gamma: f64) -> (DMatrix<f64>, Vec<f64>) {
        let d = self.tilt(gamma);
        let mut m = self.u.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= d[j];
        }
        (m, d)
    }
}

const DENSE_EIGEN_LIMIT: usize = 64;

impl UChain for GridChain {
    fn laplace(&self, gamma: f64, n: usize) -> Result<f64> {
        let (ud, d) = self.ud(gamma);
        let mut h = DVector::from_element(self.pi.len(), 1.0);
        for _ in 0..n {
            h = &ud * h;
        }
        Ok(self.pi.iter().zip(&d).zip(h.iter()).map(|((p, d), h)| p * d * h).sum())
    }

    fn spectral_radius(&self, gamma: f64) -> Result<f64> {
        let (ud, _) = self.ud(gamma);
        if ud.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        if ud.nrows() <= DENSE_EIGEN_LIMIT {
            return Ok(ud
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max));
        }
        let ones = vec![1.0; ud.nrows()];
        let settings = PerronSettings::default();
        match perron_matrix(&ud, &ones, gamma, &settings) {
            Ok(t) => Ok(t.r),
            Err(Error::NoSpectralGap { r, .. }) => Ok(r),
            Err(e) => Err(e),
        }
    }

    fn generating(&self, gamma: f64, x: f64) -> Result<Option<f64>> {
        if x == 0.0 {
            return self.laplace(gamma, 0).map(Some);
        }
        if x * self.spectral_radius(gamma)? >= 1.0 {
            return Ok(None);
        }
        let (ud, d) = self.ud(gamma);
        let n = ud.nrows();
        let a = DMatrix::<f64>::identity(n, n) - ud * x;
        let y = a
            .lu()
            .solve(&DVector::from_element(n, 1.0))
            .ok_or_else(|| Error::Precondition("I − xŨ is singular".into()))?;
        let g: f64 = self.pi.iter().zip(&d).zip(y.iter()).map(|((p, d), y)| p * d * y).sum();
        Ok((g.is_finite() && g >= 0.0).then_some(g))
    }
}

/// The `U`-chain of a Knudsen model: exact for resampling, a matrix otherwise
/// (the Nyström grid of `grid` for continuous states).
pub fn knudsen_chain(model: &MarkovModel, grid: &GridSpec) -> Result<Box<dyn UChain>> {
    let ModelKind::Knudsen { alpha, base, pi } = model.kind() else {
        return Err(Error::Precondition("not a Knudsen model".into()));
    };
    match (base, pi) {
        (BaseKernel::Resampling, _) => Ok(Box::new(IidChain::new(model)?)),
        (BaseKernel::Finite(u), StationaryLaw::Discrete(pi)) => {
            let n = u.len();
            let flat: Vec<f64> = u.iter().flatten().copied().collect();
            let xi = (0..n).map(|i| model.xi(i as f64)).collect::<Result<Vec<_>>>()?;
            Ok(Box::new(GridChain::new(DMatrix::from_row_slice(n, n, &flat), pi.clone(), xi)?))
        }
        _ => {
            if *alpha >= 1.0 {
                return Ok(Box::new(IidChain::new(model)?));
            }
            // Recover U from the discretized mixture B = α 1 mᵀ + (1−α) U.
            let op = discretize(model, 0.0, grid)?;
            let m = op.stationary_masses()?;
            let n = op.len();
            let mut u = op.base().clone();
            for i in 0..n {
                for j in 0..n {
                    u[(i, j)] = ((u[(i, j)] - alpha * m[j]) / (1.0 - alpha)).max(0.0);
                }
            }
            Ok(Box::new(GridChain::new(u, m, op.xi().to_vec())?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMethod {
    FixedPoint,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaStatus {
    Converged,
    /// No root above `(1−α)ρ(Ũ_γ)`: `r(γ) ≤ 1−α`.
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnudsenLambda {
    pub lambda: f64,
    pub status: LambdaStatus,
    pub method: LambdaMethod,
    pub iterations: usize,
    /// `(1−α)ρ(Ũ_γ)`.
    pub lower_bound: f64,
}

const FIXED_POINT_BUDGET: usize = 500;

/// Solves `λ = α g_Z(γ, (1−α)/λ)` on `λ > (1−α)ρ(Ũ_γ)`.
///
/// Plain iteration from `λ₀ = αL_Z(γ) + 1 − α` is tried first; it contracts
/// only when `α` is large enough, so on failure the monotone map
/// `λ ↦ λ − αg_Z(γ, (1−α)/λ)` is bisected instead.
pub fn knudsen_lambda(chain: &dyn UChain, alpha: f64, gamma: f64, tol: f64) -> Result<KnudsenLambda> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("model.alpha", "Knudsen alpha must lie in (0, 1]"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("solve.tol", "tolerance must be positive"));
    }
    let lower = (1.0 - alpha) * chain.spectral_radius(gamma)?;
    let f = |lambda: f64| -> Result<Option<f64>> {
        Ok(chain.generating(gamma, (1.0 - alpha) / lambda)?.map(|g| alpha * g))
    };
    let mut lambda = alpha * chain.laplace(gamma, 0)? + (1.0 - alpha);
    for it in 1..=FIXED_POINT_BUDGET {
        let next = match f(lambda)? {
            Some(v) if v.is_finite() && v > lower => v,
            _ => break,
        };
        let step = (next - lambda).abs();
        lambda = next;
        if step < tol {
            return Ok(KnudsenLambda {
                lambda,
                status: LambdaStatus::Converged,
                method: LambdaMethod::FixedPoint,
                iterations: it,
                lower_bound: lower,
            });
        }
    }
    // h(λ) = λ − F(λ) is increasing; F = +∞ where the series diverges.
    let h = |lambda: f64| -> Result<f64> { Ok(f(lambda)?.map_or(f64::NEG_INFINITY, |v| lambda - v)) };
    let mut lo = lower + 1e-14 * lower.max(1.0);
    let mut hi = 1.0;
    let subcritical = KnudsenLambda {
        lambda: lower,
        status: LambdaStatus::Subcritical,
        method: LambdaMethod::Bisection,
        iterations: 0,
        lower_bound: lower,
    };
    if lo >= hi || h(lo)? >= 0.0 {
        return Ok(subcritical);
    }
    if h(hi)? < 0.0 {
        return Err(Error::Precondition(format!("no root of λ = αg_Z(γ, (1−α)/λ) in ({lower}, 1]")));
    }
    let mut iterations = 0;
    while hi - lo > tol && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if h(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(KnudsenLambda {
        lambda: 0.5 * (lo + hi),
        status: LambdaStatus::Converged,
        method: LambdaMethod::Bisection,
        iterations,
        lower_bound: lower,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuCriterion {
    pub nu_finite: bool,
    /// `2α Σ (2(1−α))ⁿ P_π(Σ_{k≤n} ξ(Z_k) = 0)`, infinite when the series diverges.
    pub threshold: f64,
}

/// Finiteness of `ν` for a Knudsen kernel with `α > 1/2`.
pub fn knudsen_nu_criterion(chain: &dyn UChain, alpha: f64) -> Result<NuCriterion> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(Error::Precondition(format!("criterion needs alpha > 1/2, got {alpha}")));
    }
    if chain.zero_mass(0)? == 0.0 {
        return Ok(NuCriterion {
            nu_finite: true,
            threshold: 0.0,
        });
    }
    let threshold = chain
        .generating(f64::INFINITY, 2.0 * (1.0 - alpha))?
        .map_or(f64::INFINITY, |g| 2.0 * alpha * g);
    Ok(NuCriterion {
        nu_finite: threshold < 1.0,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodicity::{solve_nu, NuOutcome, NU_TOL};
    use crate::kernels::{DistributionSpec, Observable};
    use crate::operator::perron;
    use proptest::prelude::*;

    fn finite(alpha: f64, u: Vec<Vec<f64>>, xi: Vec<f64>) -> MarkovModel {
        MarkovModel::knudsen_finite(alpha, u, Observable::table(xi)).unwrap()
    }

    #[test]
    fn markov_case_has_unit_root() {
        let m = finite(0.3, vec![vec![0.5, 0.5], vec![0.2, 0.8]], vec![1.0, 2.0]);
        let chain = knudsen_chain(&m, &GridSpec::default()).unwrap();
        let l = knudsen_lambda(chain.as_ref(), 0.3, 0.0, 1e-12).unwrap();
        assert!((l.lambda - 1.0).abs() < 1e-9, "{l:?}");
    }

    #[test]
    fn resampling_root_is_the_marginal_transform() {
        let m = MarkovModel::knudsen_resampling(0.4, DistributionSpec::Exponential { rate: 1.0 }, Observable::identity())
            .unwrap();
        let chain = knudsen_chain(&m, &GridSpec::default()).unwrap();
        for gamma in [0.5, 1.0, 3.0] {
            let l = knudsen_lambda(chain.as_ref(), 0.4, gamma, 1e-13).unwrap();
            assert!((l.lambda - 1.0 / (1.0 + gamma)).abs() < 1e-9, "{l:?}");
        }
    }

    #[test]
    fn small_alpha_falls_back_to_bisection() {
        let m = finite(0.2, vec![vec![0.1, 0.9], vec![0.7, 0.3]], vec![0.5, 2.0]);
        let chain = knudsen_chain(&m, &GridSpec::default()).unwrap();
        let l = knudsen_lambda(chain.as_ref(), 0.2, 0.7, 1e-13).unwrap();
        let op = discretize(&m, 0.7, &GridSpec::default()).unwrap();
        let r = perron(&op, &PerronSettings::default()).unwrap().r;
        if l.status == LambdaStatus::Converged {
            assert!((l.lambda - r).abs() < 1e-8, "{l:?} vs {r}");
        } else {
            assert!(r <= 1.0 - 0.2 + 1e-12);
        }
    }

    #[test]
    fn nu_criterion_examples() {
        let m = finite(0.6, vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![1.0, 2.0]);
        let chain = knudsen_chain(&m, &GridSpec::default()).unwrap();
        assert_eq!(knudsen_nu_criterion(chain.as_ref(), 0.6).unwrap(), NuCriterion { nu_finite: true, threshold: 0.0 });
        assert!(matches!(knudsen_nu_criterion(chain.as_ref(), 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn nu_criterion_with_zero_set_matches_bisection_status() {
        // State 0 has ξ = 0 and is left with probability 1 − q under U.
        for (alpha, q) in [(0.6, 0.3), (0.9, 0.2), (0.55, 0.9), (0.7, 0.95)] {
            let u = vec![vec![q, 1.0 - q], vec![0.5, 0.5]];
            let m = finite(alpha, u, vec![0.0, 1.0]);
            let chain = knudsen_chain(&m, &GridSpec::default()).unwrap();
            let c = knudsen_nu_criterion(chain.as_ref(), alpha).unwrap();
            // Matrix-power brute force of the threshold series.
            let pi0 = m.stationary_vector().unwrap()[0];
            let brute: f64 = (0..2000).map(|n| (2.0 * (1.0 - alpha)).powi(n) * pi0 * q.powi(n)).sum::<f64>() * 2.0 * alpha;
            assert!((c.threshold - brute).abs() < 1e-9 * brute.max(1.0), "{} vs {brute}", c.threshold);
            let op0 = discretize(&m, 0.0, &GridSpec::default()).unwrap();
            let nu = solve_nu(&op0, 2.0, None, NU_TOL, &PerronSettings::default()).unwrap();
            assert_eq!(c.nu_finite, matches!(nu, NuOutcome::Finite { .. }), "α = {alpha}, q = {q}: {c:?} {nu:?}");
        }
    }

    #[test]
    fn continuous_u_chain_matches_perron() {
        let m = MarkovModel::knudsen_ar1(0.7, 0.5, 1.0, Observable::quadratic()).unwrap();
        let grid = GridSpec::with_n(200);
        let chain = knudsen_chain(&m, &grid).unwrap();
        let l = knudsen_lambda(chain.as_ref(), 0.7, 0.4, 1e-12).unwrap();
        let r = perron(&discretize(&m, 0.4, &grid).unwrap(), &PerronSettings::default()).unwrap().r;
        assert_eq!(l.status, LambdaStatus::Converged);
        assert!((l.lambda - r).abs() < 1e-6, "{} vs {r}", l.lambda);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn fixed_point_equals_perron(rows in proptest::collection::vec(proptest::collection::vec(0.05f64..1.0, 4), 4),
                                     xi in proptest::collection::vec(0.0f64..2.0, 4),
                                     alpha in 0.05f64..0.95, gamma in 0.0f64..4.0) {
            let u: Vec<Vec<f64>> = rows.iter().map(|r| { let s: f64 = r.iter().sum(); r.iter().map(|v| v / s).collect() }).collect();
            let m = finite(alpha, u, xi);
            let chain = knudsen_chain(&m, &GridSpec::default()).unwrap();
            let l = knudsen_lambda(chain.as_ref(), alpha, gamma, 1e-13).unwrap();
            let r = perron(&discretize(&m, gamma, &GridSpec::default()).unwrap(), &PerronSettings::default()).unwrap().r;
            match l.status {
                LambdaStatus::Converged => prop_assert!((l.lambda - r).abs() < 1e-8, "{:?} vs {}", l, r),
                LambdaStatus::Subcritical => prop_assert!(r <= 1.0 - alpha + 1e-9),
            }
        }
    }
}
