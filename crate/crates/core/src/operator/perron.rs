//! Perron triple `(r, φ, π_γ)` by power iteration.

use nalgebra::{DMatrix, DVector};

use super::TiltedOperator;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerronSettings {
    /// Stopping threshold for `‖Kφ − rφ‖ / ‖φ‖`, taken relative to `r` when `r < 1`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PerronSettings {
    fn default() -> Self {
        PerronSettings {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTriple {
    pub gamma: f64,
    pub r: f64,
    /// Right eigenvector on the grid, scaled so that `π_γ(φ) = 1`.
    pub phi: Vec<f64>,
    /// Left eigenvector as node masses summing to 1.
    pub pi_gamma: Vec<f64>,
    pub sub_modulus: f64,
    /// `‖Kφ − rφ‖ / ‖φ‖` in the `V^a`-weighted sup norm.
    pub residual: f64,
    /// `‖πᵀK − rπᵀ‖₁`.
    pub left_residual: f64,
    pub iterations: usize,
}

impl SpectralTriple {
    /// `π_γ(f)`.
    pub fn pair(&self, f: &[f64]) -> f64 {
        self.pi_gamma.iter().zip(f).map(|(p, f)| p * f).sum()
    }

    /// `θ = sub_modulus / r`.
    pub fn gap_ratio(&self) -> f64 {
        if self.r > 0.0 {
            self.sub_modulus / self.r
        } else {
            0.0
        }
    }
}

fn wnorm(f: &DVector<f64>, vw: &[f64]) -> f64 {
    f.iter().zip(vw).map(|(f, v)| f.abs() / v).fold(0.0, f64::max)
}

fn threshold(tol: f64, r: f64) -> f64 {
    tol * r.min(1.0)
}

/// Dominant right eigenpair; `vw` holds `V^a` at the nodes.
/// Returns `(r, φ, residual, iterations)` with `φ` normalized in the weighted sup norm.
pub(crate) fn right_vector(
    k: &DMatrix<f64>,
    vw: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, f64, usize)> {
    let n = k.nrows();
    let mut v = DVector::from_iterator(n, vw.iter().map(|w| 1.0 / w));
    v /= wnorm(&v, vw);
    let mut history = Vec::with_capacity(16);
    for it in 1..=max_iter {
        let u = k * &v;
        let norm_u = wnorm(&u, vw);
        if norm_u == 0.0 || !norm_u.is_finite() {
            return Ok((0.0, v.iter().copied().collect(), 0.0, it));
        }
        let rq = v.dot(&u) / v.dot(&v);
        let residual = wnorm(&(&u - &v * rq), vw);
        v = u / norm_u;
        if residual <= threshold(tol, rq) {
            let kv = k * &v;
            let r = v.dot(&kv) / v.dot(&v);
            let residual = wnorm(&(kv - &v * r), vw) / wnorm(&v, vw);
            return Ok((r, v.iter().copied().collect(), residual, it));
        }
        if history.len() == 16 {
            history.remove(0);
        }
        history.push(rq);
    }
    let (lo, hi) = history
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Err(Error::NotConverged {
        iterations: max_iter,
        oscillation: hi - lo,
    })
}

/// Dominant left eigenvector as masses summing to 1.
/// Returns `(r, π, ℓ¹ residual, iterations)`.
pub(crate) fn left_vector(k: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>, f64, usize)> {
    let n = k.nrows();
    let kt = k.transpose();
    let mut p = DVector::from_element(n, 1.0 / n as f64);
    let mut history = Vec::with_capacity(16);
    for it in 1..=max_iter {
        let q = &kt * &p;
        let mass = q.sum();
        if mass == 0.0 || !mass.is_finite() {
            return Ok((0.0, p.iter().copied().collect(), 0.0, it));
        }
        let rq = p.dot(&q) / p.dot(&p);
        let residual = (&q - &p * rq).lp_norm(1);
        p = q / mass;
        if residual <= threshold(tol, rq) {
            let q = &kt * &p;
            let r = q.sum();
            let residual = (q - &p * r).lp_norm(1);
            return Ok((r, p.iter().copied().collect(), residual, it));
        }
        if history.len() == 16 {
            history.remove(0);
        }
        history.push(rq);
    }
    let (lo, hi) = history
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Err(Error::NotConverged {
        iterations: max_iter,
        oscillation: hi - lo,
    })
}

/// Growth rate of `K` on the complement of the Perron direction: iterate
/// `g ← Kg − π(Kg)φ` and take the geometric mean of the late norm ratios.
fn deflated_modulus(k: &DMatrix<f64>, vw: &[f64], phi: &[f64], pi: &[f64], steps: usize) -> f64 {
    let n = k.nrows();
    let phi = DVector::from_column_slice(phi);
    let pi = DVector::from_column_slice(pi);
    // Deterministic, sign-varying start so that no mode is missed by symmetry.
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut g = DVector::from_fn(n, |i, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * vw[i]
    });
    g -= &phi * pi.dot(&g);
    let mut norm = wnorm(&g, vw);
    if norm == 0.0 {
        return 0.0;
    }
    g /= norm;
    let mut logs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut h = k * &g;
        h -= &phi * pi.dot(&h);
        norm = wnorm(&h, vw);
        if !(norm > 1e-280) {
            return 0.0;
        }
        logs.push(norm.ln());
        g = h / norm;
    }
    let tail = &logs[logs.len() / 2..];
    (tail.iter().sum::<f64>() / tail.len() as f64).exp()
}

/// Perron triple of an arbitrary nonnegative matrix; `vw` is `V^a` at the nodes.
pub fn perron_matrix(k: &DMatrix<f64>, vw: &[f64], gamma: f64, settings: &PerronSettings) -> Result<SpectralTriple> {
    let n = k.nrows();
    if settings.tol <= 0.0 || settings.max_iter == 0 {
        return Err(Error::param("solve.perron_tol", "tolerance and iteration budget must be positive"));
    }
    if k.iter().all(|&v| v <= 0.0) {
        return Ok(SpectralTriple {
            gamma,
            r: 0.0,
            phi: vec![1.0; n],
            pi_gamma: vec![1.0 / n as f64; n],
            sub_modulus: 0.0,
            residual: 0.0,
            left_residual: 0.0,
            iterations: 0,
        });
    }
    let (r, mut phi, residual, iterations) = right_vector(k, vw, settings.tol, settings.max_iter)?;
    let (_, pi, left_residual, _) = left_vector(k, settings.tol, settings.max_iter)?;
    if r == 0.0 {
        return Ok(SpectralTriple {
            gamma,
            r,
            phi,
            pi_gamma: pi,
            sub_modulus: 0.0,
            residual,
            left_residual,
            iterations,
        });
    }
    let strict = gamma.is_finite();
    if let Some(i) = phi.iter().position(|&p| if strict { !(p > 0.0) } else { p < 0.0 }) {
        return Err(Error::NotPositive(format!("φ[{i}] = {:e} at γ = {gamma}", phi[i])));
    }
    if let Some(i) = pi.iter().position(|&p| p < 0.0) {
        return Err(Error::NotPositive(format!("π_γ[{i}] = {:e} at γ = {gamma}", pi[i])));
    }
    let s: f64 = pi.iter().zip(&phi).map(|(p, f)| p * f).sum();
    if !(s > 0.0) {
        return Err(Error::NotPositive(format!("π_γ(φ) = {s:e} at γ = {gamma}")));
    }
    phi.iter_mut().for_each(|f| *f /= s);
    let sub_modulus = deflated_modulus(k, vw, &phi, &pi, 200.min(settings.max_iter).max(20));
    if sub_modulus >= r {
        return Err(Error::NoSpectralGap { r, sub_modulus });
    }
    Ok(SpectralTriple {
        gamma,
        r,
        phi,
        pi_gamma: pi,
        sub_modulus,
        residual,
        left_residual,
        iterations,
    })
}

pub fn perron(op: &TiltedOperator, settings: &PerronSettings) -> Result<SpectralTriple> {
    perron_matrix(op.matrix(), &op.weight_values(), op.gamma(), settings)
}

/// `Π_γ f = π_γ(f) φ`.
pub fn projector_apply(triple: &SpectralTriple, f: &[f64]) -> Vec<f64> {
    let c = triple.pair(f);
    triple.phi.iter().map(|p| c * p).collect()
}

/// `r′(γ) = −r π_γ(ξφ) / π_γ(φ)`.
pub fn r_derivative(op: &TiltedOperator, triple: &SpectralTriple) -> Result<f64> {
    if !op.gamma().is_finite() {
        return Err(Error::Precondition("r′ is not defined at γ = ∞".into()));
    }
    if !(triple.r > 0.0) {
        return Err(Error::Precondition("r′ needs r(γ) > 0".into()));
    }
    let num: f64 = triple
        .pi_gamma
        .iter()
        .zip(op.xi())
        .zip(&triple.phi)
        .map(|((p, x), f)| p * x * f)
        .sum();
    let den = triple.pair(&triple.phi);
    Ok(-triple.r * num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{DistributionSpec, MarkovModel, NoiseSpec, Observable};
    use crate::operator::{discretize, GridSpec};
    use proptest::prelude::*;

    fn settings() -> PerronSettings {
        PerronSettings::default()
    }

    fn ar1(obs: Observable) -> MarkovModel {
        MarkovModel::ar1(0.5, NoiseSpec::Gaussian { sigma: 1.0 }, 2.0, obs).unwrap()
    }

    /// `(1 + 2σ²(γ+b))^{−1/2}` with `b` the nonnegative root of the ansatz quadratic.
    fn gaussian_r(gamma: f64, alpha: f64, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        let (a, b, c) = (2.0 * s2, 1.0 + 2.0 * s2 * gamma - alpha * alpha, -gamma * alpha * alpha);
        let root = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        (1.0 + 2.0 * s2 * (gamma + root)).powf(-0.5)
    }

    #[test]
    fn markov_radius_is_one() {
        let models = [
            ar1(Observable::quadratic()),
            MarkovModel::knudsen_resampling(0.4, DistributionSpec::Exponential { rate: 1.0 }, Observable::identity())
                .unwrap(),
            MarkovModel::finite_state(vec![vec![0.1, 0.9], vec![0.5, 0.5]], Observable::table(vec![0.0, 1.0])).unwrap(),
        ];
        for m in &models {
            let op = discretize(m, 0.0, &GridSpec::default()).unwrap();
            let t = perron(&op, &settings()).unwrap();
            assert!((t.r - 1.0).abs() < 1e-8, "{}", t.r);
            assert!((t.pi_gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((t.pair(&t.phi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resampling_radius_is_the_tilted_mass() {
        let m = MarkovModel::knudsen_resampling(1.0, DistributionSpec::Exponential { rate: 1.0 }, Observable::identity())
            .unwrap();
        let op = discretize(&m, 0.7, &GridSpec::default()).unwrap();
        let t = perron(&op, &settings()).unwrap();
        let mass: f64 = op.matrix().row(0).sum();
        assert!((t.r - mass).abs() < 1e-12);
        assert!((t.r - 1.0 / 1.7).abs() < 1e-8);
        let (lo, hi) = t.phi.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi - lo < 1e-12);
        let rp = r_derivative(&op, &t).unwrap();
        assert!((rp + 1.0 / (1.7 * 1.7)).abs() < 1e-8, "{rp}");
    }

    #[test]
    fn gaussian_ansatz_matches_nystrom() {
        let op = discretize(&ar1(Observable::quadratic()), 0.0, &GridSpec::default()).unwrap();
        for gamma in [0.1, 0.5, 1.0, 1.40625, 3.0] {
            let t = perron(&op.retilt(gamma).unwrap(), &settings()).unwrap();
            let exact = gaussian_r(gamma, 0.5, 1.0);
            assert!((t.r - exact).abs() < 1e-4, "γ = {gamma}: {} vs {exact}", t.r);
            assert!(t.residual <= 1e-10);
            assert!(t.sub_modulus < t.r);
        }
        assert!((gaussian_r(1.40625, 0.5, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let op = discretize(&ar1(Observable::quadratic()), 0.0, &GridSpec::default()).unwrap();
        let h = 1e-4;
        let g = 0.8;
        let t = perron(&op.retilt(g).unwrap(), &settings()).unwrap();
        let rp = r_derivative(&op.retilt(g).unwrap(), &t).unwrap();
        let up = perron(&op.retilt(g + h).unwrap(), &settings()).unwrap().r;
        let dn = perron(&op.retilt(g - h).unwrap(), &settings()).unwrap().r;
        let fd = (up - dn) / (2.0 * h);
        assert!(((rp - fd) / fd).abs() < 1e-3, "{rp} vs {fd}");
        assert!(rp < 0.0);
    }

    #[test]
    fn constant_observable_scales_the_radius() {
        let c = 0.6;
        let op = discretize(&ar1(Observable::constant(c)), 1.3, &GridSpec::with_n(200)).unwrap();
        let t = perron(&op, &settings()).unwrap();
        assert!((t.r - (-1.3 * c).exp()).abs() < 1e-8);
        let rp = r_derivative(&op, &t).unwrap();
        assert!((rp + c * (-1.3 * c).exp()).abs() < 1e-8);
    }

    #[test]
    fn zero_operator_has_zero_radius() {
        let op = discretize(&ar1(Observable::constant(1.0)), f64::INFINITY, &GridSpec::with_n(40)).unwrap();
        let t = perron(&op, &settings()).unwrap();
        assert_eq!(t.r, 0.0);
        assert!(r_derivative(&op, &t).is_err());
    }

    #[test]
    fn periodic_chain_does_not_converge() {
        let m = MarkovModel::finite_state_with_stationary(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
            Observable::table(vec![0.0, 0.0]),
        )
        .unwrap();
        let op = discretize(&m, 0.0, &GridSpec::default()).unwrap();
        let err = perron(&op, &PerronSettings { tol: 1e-10, max_iter: 500 });
        assert!(err.is_err(), "{err:?}");
    }

    #[test]
    fn projector_examples() {
        let op = discretize(&ar1(Observable::quadratic()), 0.5, &GridSpec::with_n(120)).unwrap();
        let t = perron(&op, &settings()).unwrap();
        let p = projector_apply(&t, &t.phi);
        for (a, b) in p.iter().zip(&t.phi) {
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
        // Remove the π_γ component of an arbitrary vector.
        let f: Vec<f64> = op.nodes().iter().map(|x| x.sin()).collect();
        let c = t.pair(&f);
        let g: Vec<f64> = f.iter().zip(&t.phi).map(|(f, p)| f - c * p).collect();
        assert!(projector_apply(&t, &g).iter().all(|v| v.abs() < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projector_is_idempotent_and_commutes(seed in proptest::collection::vec(-1.0f64..1.0, 60)) {
            let m = MarkovModel::ar1(0.5, NoiseSpec::Gaussian { sigma: 1.0 }, 2.0, Observable::quadratic()).unwrap();
            let op = discretize(&m, 0.4, &GridSpec::with_n(60)).unwrap();
            let t = perron(&op, &PerronSettings::default()).unwrap();
            let once = projector_apply(&t, &seed);
            let twice = projector_apply(&t, &once);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            // KΠ = rΠ = ΠK
            let f = DVector::from_column_slice(&seed);
            let k_pi = op.matrix() * DVector::from_column_slice(&once);
            let kf: Vec<f64> = (op.matrix() * &f).iter().copied().collect();
            let pi_k = projector_apply(&t, &kf);
            for i in 0..seed.len() {
                prop_assert!((k_pi[i] - t.r * once[i]).abs() < 1e-8);
                prop_assert!((pi_k[i] - t.r * once[i]).abs() < 1e-8);
            }
        }

        #[test]
        fn radius_is_monotone_and_holder_positive(g0 in 0.05f64..2.0, dg in 0.01f64..3.0) {
            let m = MarkovModel::ar1(0.5, NoiseSpec::Gaussian { sigma: 1.0 }, 2.0, Observable::quadratic()).unwrap();
            let op = discretize(&m, 0.0, &GridSpec::with_n(120)).unwrap();
            let r0 = perron(&op.retilt(g0).unwrap(), &PerronSettings::default()).unwrap().r;
            let g1 = g0 + dg;
            let r1 = perron(&op.retilt(g1).unwrap(), &PerronSettings::default()).unwrap().r;
            prop_assert!(r1 <= r0 + 1e-8);
            prop_assert!(r1 >= r0.powf(g1 / g0) - 1e-6);
        }

        #[test]
        fn finite_chain_residuals(rows in proptest::collection::vec(proptest::collection::vec(0.05f64..1.0, 4), 4),
                                  xi in proptest::collection::vec(0.0f64..2.0, 4), gamma in 0.0f64..5.0) {
            let p: Vec<Vec<f64>> = rows.iter().map(|r| { let s: f64 = r.iter().sum(); r.iter().map(|v| v / s).collect() }).collect();
            let m = MarkovModel::finite_state(p, Observable::table(xi)).unwrap();
            let op = discretize(&m, gamma, &GridSpec::default()).unwrap();
            let t = perron(&op, &PerronSettings::default()).unwrap();
            prop_assert!(t.residual <= 1e-10);
            prop_assert!(t.left_residual <= 1e-10);
            prop_assert!(t.phi.iter().all(|&v| v > 0.0));
            prop_assert!(t.sub_modulus < t.r);
        }
    }

    #[test]
    fn radius_vanishes_at_infinity_for_ar1() {
        let op = discretize(&ar1(Observable::quadratic()), 0.0, &GridSpec::with_n(200)).unwrap();
        let mut prev = 1.0;
        for k in 0..8 {
            let r = perron(&op.retilt(2f64.powi(k)).unwrap(), &settings()).unwrap().r;
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 0.1, "{prev}");
        let inf = perron(&op.retilt(f64::INFINITY).unwrap(), &settings()).unwrap();
        // ξ = 0 only at x = 0, which is not a Gauss–Legendre node for even N.
        assert_eq!(inf.r, 0.0);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let m = ar1(Observable::quadratic());
        let a = perron(&discretize(&m, 1.0, &GridSpec::with_n(200)).unwrap(), &settings()).unwrap().r;
        let b = perron(&discretize(&m, 1.0, &GridSpec::with_n(400)).unwrap(), &settings()).unwrap().r;
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
