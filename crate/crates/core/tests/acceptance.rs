//! Acceptance criteria 1–8. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use merg_core::ergodicity::{
    amplitude, c_nu, counterexample_demo, fit_mult_ergodicity, knudsen_chain, knudsen_lambda, solve_nu,
    CounterexampleSpec, FitInput, LambdaStatus, NuOutcome, NU_TOL,
};
use merg_core::kernels::{DistributionSpec, InitialLaw, MarkovModel, NoiseSpec, Observable};
use merg_core::laplace::{generating_function, laplace_mc_grid, LaplaceStream, SeriesStatus};
use merg_core::operator::{
    discretize, doeblin_fortet, perron, projector_apply, r_derivative, GridSpec, PerronSettings, TiltedOperator,
};

struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }
}

fn resampling() -> MarkovModel {
    MarkovModel::knudsen_resampling(0.4, DistributionSpec::Exponential { rate: 1.0 }, Observable::identity()).unwrap()
}

fn ar1(observable: Observable) -> MarkovModel {
    MarkovModel::ar1(0.5, NoiseSpec::Gaussian { sigma: 1.0 }, 2.0, observable).unwrap()
}

fn settings() -> PerronSettings {
    PerronSettings::default()
}

/// Gaussian ansatz `φ = e^{−bx²}` for the AR(1) kernel with `ξ = x²`:
/// `b = α²(γ+b)/(1+2σ²(γ+b))`, `r = (1+2σ²(γ+b))^{−1/2}`.
fn ansatz_r(alpha: f64, sigma: f64, gamma: f64) -> f64 {
    let mut b = 0.0;
    for _ in 0..10_000 {
        let next = alpha * alpha * (gamma + b) / (1.0 + 2.0 * sigma * sigma * (gamma + b));
        if (next - b).abs() < 1e-16 {
            b = next;
            break;
        }
        b = next;
    }
    (1.0 + 2.0 * sigma * sigma * (gamma + b)).powf(-0.5)
}

/// `E_x[exp(−γ Σ_{k≤n} X_k²)] = C_n e^{−b_n x²}`, averaged over `X_0 ~ N(m, v)`.
fn riccati(alpha: f64, sigma: f64, gamma: f64, m: f64, v: f64, n_max: usize) -> Vec<f64> {
    let (mut b, mut c) = (gamma, 1.0);
    let mut out = Vec::with_capacity(n_max + 1);
    for _ in 0..=n_max {
        out.push(c / (1.0 + 2.0 * v * b).sqrt() * (-b * m * m / (1.0 + 2.0 * v * b)).exp());
        let s = 1.0 + 2.0 * sigma * sigma * b;
        c /= s.sqrt();
        b = gamma + alpha * alpha * b / s;
    }
    out
}

fn criterion_1(o: &mut Outcome) {
    let start = Instant::now();
    let m = resampling();
    let op0 = discretize(&m, 0.0, &GridSpec::default()).unwrap();
    for gamma in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let r = perron(&op0.retilt(gamma).unwrap(), &settings()).unwrap().r;
        let exact = 1.0 / (1.0 + gamma);
        o.check((r - exact).abs() <= 1e-6, || format!("r({gamma}) = {r}, expected {exact}"));
    }
    let nu = solve_nu(&op0, 2.0, None, NU_TOL, &settings()).unwrap().nu();
    o.check(nu.is_some_and(|v| (v - 1.0).abs() <= 1e-6), || format!("nu = {nu:?}"));
    if let Some(nu) = nu {
        let c = c_nu(&m, &InitialLaw::Stationary, &op0, nu, 2.0, &settings(), 1e-10, 100_000).unwrap();
        o.check((c.formula - 1.0).abs() <= 1e-3, || format!("C_nu formula = {}", c.formula));
        o.check(c.direct.is_some_and(|d| (d - 1.0).abs() <= 1e-3), || format!("C_nu direct = {:?}", c.direct));
    }
    let t = start.elapsed().as_secs_f64();
    o.check(t < 5.0, || format!("runtime {t:.2} s"));
}

fn three_state(c: f64) -> MarkovModel {
    MarkovModel::finite_state(
        vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2]],
        Observable::constant(c),
    )
    .unwrap()
}

fn criterion_2(o: &mut Outcome) {
    let c = 0.7;
    let models = [
        ("ar1", ar1(Observable::constant(c))),
        ("finite", three_state(c)),
        (
            "knudsen",
            MarkovModel::knudsen_resampling(0.4, DistributionSpec::Exponential { rate: 1.0 }, Observable::constant(c))
                .unwrap(),
        ),
    ];
    let nu_exact = 2f64.ln() / c;
    let c_exact = 1.0 / (2.0 * 2f64.ln());
    for (name, m) in &models {
        let op0 = discretize(m, 0.0, &GridSpec::default()).unwrap();
        for gamma in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let op = op0.retilt(gamma).unwrap();
            let t = perron(&op, &settings()).unwrap();
            let rp = r_derivative(&op, &t).unwrap();
            let (r_ex, rp_ex) = ((-gamma * c).exp(), -c * (-gamma * c).exp());
            o.check((t.r - r_ex).abs() <= 1e-8, || format!("{name}: r({gamma}) = {}, expected {r_ex}", t.r));
            o.check((rp - rp_ex).abs() <= 1e-8, || format!("{name}: r'({gamma}) = {rp}, expected {rp_ex}"));
        }
        let nu = solve_nu(&op0, 2.0, None, NU_TOL, &settings()).unwrap().nu();
        o.check(nu.is_some_and(|v| (v - nu_exact).abs() <= 1e-8), || format!("{name}: nu = {nu:?}"));
        if let Some(nu) = nu {
            let cn = c_nu(m, &InitialLaw::Stationary, &op0, nu, 2.0, &settings(), 1e-10, 100_000).unwrap();
            o.check((cn.formula - c_exact).abs() <= 1e-6, || format!("{name}: C_nu = {}", cn.formula));
        }
    }
}

fn criterion_3(o: &mut Outcome) {
    let start = Instant::now();
    let m = ar1(Observable::quadratic());
    let op0 = discretize(&m, 0.0, &GridSpec::with_n(400)).unwrap();
    let (alpha, sigma) = (0.5, 1.0);
    let gammas: Vec<f64> = (0..50).map(|k| 0.1 + k as f64 * 0.1).collect();
    let r_at = |g: f64| perron(&op0.retilt(g).unwrap(), &settings()).unwrap().r;
    for &gamma in &gammas {
        let op = op0.retilt(gamma).unwrap();
        let t = perron(&op, &settings()).unwrap();
        let exact = ansatz_r(alpha, sigma, gamma);
        o.check((t.r - exact).abs() <= 1e-4, || format!("r({gamma}) = {}, ansatz {exact}", t.r));
        let rp = r_derivative(&op, &t).unwrap();
        let h = 1e-4;
        let fd = (r_at(gamma + h) - r_at(gamma - h)) / (2.0 * h);
        o.check(((rp - fd) / fd).abs() <= 1e-3, || format!("r'({gamma}) = {rp}, central difference {fd}"));
    }
    let mc_gammas = [0.1, 0.5, 1.0, 2.0];
    let stationary_var = sigma * sigma / (1.0 - alpha * alpha);
    let mut pairs = 0;
    let mut within = 0;
    for (law, m0, v0) in [
        (InitialLaw::Stationary, 0.0, stationary_var),
        (InitialLaw::Point(1.0), 1.0, 0.0),
    ] {
        let mc = laplace_mc_grid(&m, &law, &mc_gammas, 10, 100_000, 20_240_601).unwrap();
        for (gi, &gamma) in mc_gammas.iter().enumerate() {
            let exact = riccati(alpha, sigma, gamma, m0, v0, 10);
            for n in 0..=10 {
                let e = mc[gi][n];
                pairs += 1;
                if (e.value - exact[n]).abs() <= 3.0 * e.std_error {
                    within += 1;
                }
            }
        }
    }
    let frac = within as f64 / pairs as f64;
    o.check(frac >= 0.95, || format!("MC within 3 SE at {within}/{pairs} pairs"));
    let t = start.elapsed().as_secs_f64();
    o.check(t < 60.0, || format!("runtime {t:.2} s"));
}

struct Dense {
    r: f64,
    second: f64,
    phi: Vec<f64>,
    pi: Vec<f64>,
}

fn null_vector(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.unwrap();
    let k = (0..svd.singular_values.len())
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap();
    let v: Vec<f64> = v_t.row(k).iter().copied().collect();
    let s = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| x * s).collect()
}

/// Dominant eigen-data of a non-negative matrix from a full eigen-decomposition
/// and SVD null vectors; `φ` is scaled so that `π·φ = 1`, `π` sums to 1.
fn dense(k: &DMatrix<f64>) -> Dense {
    let mut mods: Vec<f64> = k.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    mods.sort_by(|a, b| b.total_cmp(a));
    let r = mods[0];
    let n = k.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let phi = null_vector(&(k - &id * r));
    let mut pi = null_vector(&(k.transpose() - &id * r));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    let pp: f64 = pi.iter().zip(&phi).map(|(a, b)| a * b).sum();
    Dense {
        r,
        second: mods[1],
        phi: phi.iter().map(|x| x / pp).collect(),
        pi,
    }
}

fn random_chain(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.random_range(3..=6);
    let mut p = vec![vec![0.0; n]; n];
    for (i, row) in p.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if rng.random_bool(0.75) {
                *v = rng.random_range(0.0..1.0);
            }
            if j == i {
                *v += 0.1;
            }
            if j == (i + 1) % n {
                *v += 0.05;
            }
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let xi = (0..n)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..2.0) })
        .collect();
    (p, xi)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn tilted(p: &[Vec<f64>], d: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    DMatrix::from_fn(n, n, |i, j| p[i][j] * d[j])
}

fn criterion_4(o: &mut Outcome) {
    let tight = PerronSettings {
        tol: 1e-14,
        max_iter: 1_000_000,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..20 {
        let (p, xi) = random_chain(&mut rng);
        let gamma = rng.random_range(0.2..3.0);
        let m = MarkovModel::finite_state(p.clone(), Observable::table(xi.clone())).unwrap();
        let op = discretize(&m, gamma, &GridSpec::default()).unwrap();
        let t = perron(&op, &tight).unwrap();
        let d: Vec<f64> = xi.iter().map(|x| (-gamma * x).exp()).collect();
        let ex = dense(&tilted(&p, &d));
        let tag = format!("chain {case} (n = {}, γ = {gamma:.3})", p.len());
        o.check((t.r - ex.r).abs() <= 1e-8, || format!("{tag}: r {} vs {}", t.r, ex.r));
        o.check(max_diff(&t.phi, &ex.phi) <= 1e-8, || format!("{tag}: φ differs by {:e}", max_diff(&t.phi, &ex.phi)));
        o.check(max_diff(&t.pi_gamma, &ex.pi) <= 1e-8, || {
            format!("{tag}: π_γ differs by {:e}", max_diff(&t.pi_gamma, &ex.pi))
        });

        let mu = m.stationary_vector().unwrap().to_vec();
        let a = amplitude(&op, &t, &op.law(&InitialLaw::Stationary).unwrap()).unwrap();
        let a_ex: f64 = (0..p.len()).map(|i| mu[i] * d[i] * ex.phi[i]).sum();
        o.check((a - a_ex).abs() <= 1e-8, || format!("{tag}: A {a} vs {a_ex}"));

        let rp = r_derivative(&op, &t).unwrap();
        let rp_ex = -ex.r * (0..p.len()).map(|i| ex.pi[i] * xi[i] * ex.phi[i]).sum::<f64>();
        o.check((rp - rp_ex).abs() <= 1e-8, || format!("{tag}: r' {rp} vs {rp_ex}"));

        let series = LaplaceStream::oracle(&m, &InitialLaw::Stationary, gamma).unwrap().take_values(40);
        let fit = fit_mult_ergodicity(
            &[FitInput::from_triple(series, a, &t)],
            t.gap_ratio(),
        );
        let theta_ex = ex.second / ex.r;
        match fit {
            Ok(f) => o.check(((f.theta - theta_ex) / theta_ex).abs() <= 0.2, || {
                format!("{tag}: fitted θ {} vs |λ2|/λ1 {theta_ex}", f.theta)
            }),
            Err(e) => o.failures.push(format!("{tag}: fit failed: {e}")),
        }

        let alpha = rng.random_range(0.05..0.95);
        let kn = MarkovModel::knudsen_finite(alpha, p.clone(), Observable::table(xi.clone())).unwrap();
        let chain = knudsen_chain(&kn, &GridSpec::default()).unwrap();
        let l = knudsen_lambda(chain.as_ref(), alpha, gamma, 1e-13).unwrap();
        let pi_u = kn.stationary_vector().unwrap().to_vec();
        let n = p.len();
        let kk = DMatrix::from_fn(n, n, |i, j| alpha * pi_u[j] * d[j] + (1.0 - alpha) * p[i][j] * d[j]);
        let kex = dense(&kk).r;
        match l.status {
            LambdaStatus::Converged => {
                o.check((l.lambda - kex).abs() <= 1e-8, || format!("{tag}: Knudsen λ {} vs {kex}", l.lambda))
            }
            LambdaStatus::Subcritical => o.check(kex <= 1.0 - alpha + 1e-12, || {
                format!("{tag}: subcritical but dominant eigenvalue {kex} > 1 − α")
            }),
        }
    }
}

fn criterion_5(o: &mut Outcome) {
    let s = settings();
    let ar = discretize(&ar1(Observable::quadratic()), 0.0, &GridSpec::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (p, xi) = random_chain(&mut rng);
    let fin = discretize(
        &MarkovModel::finite_state(p.clone(), Observable::table(xi.clone())).unwrap(),
        0.0,
        &GridSpec::default(),
    )
    .unwrap();
    let gammas: Vec<f64> = (0..=40).map(|k| k as f64 * 0.125).collect();
    for (name, op0) in [("ar1", &ar), ("finite", &fin)] {
        let triples: Vec<_> = gammas.iter().map(|&g| perron(&op0.retilt(g).unwrap(), &s).unwrap()).collect();
        for w in triples.windows(2) {
            o.check(w[1].r <= w[0].r, || format!("{name}: r increases from γ = {} to {}", w[0].gamma, w[1].gamma));
        }
        for a in &triples[1..] {
            for b in triples.iter().filter(|b| b.gamma > a.gamma) {
                let bound = a.r.powf(b.gamma / a.gamma) - 1e-6;
                o.check(b.r >= bound, || format!("{name}: Hölder fails at γ0 = {}, γ = {}", a.gamma, b.gamma));
            }
        }
        for t in &triples {
            o.check(t.phi.iter().all(|v| *v > 0.0), || format!("{name}: φ not positive at γ = {}", t.gamma));
            o.check(t.pi_gamma.iter().all(|v| *v >= 0.0), || format!("{name}: π_γ negative at γ = {}", t.gamma));
            let f: Vec<f64> = (0..t.phi.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
            let once = projector_apply(t, &f);
            let twice = projector_apply(t, &once);
            let scale = once.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            o.check(max_diff(&once, &twice) <= 1e-10 * scale, || format!("{name}: projector not idempotent at γ = {}", t.gamma));
        }
        check_laplace_series(o, name, op0);
    }

    for case in 0..10 {
        let (u, xi) = random_chain(&mut rng);
        let alpha = rng.random_range(0.05..0.95);
        let kn = MarkovModel::knudsen_finite(alpha, u, Observable::table(xi)).unwrap();
        let gamma = rng.random_range(0.0..3.0);
        let op = discretize(&kn, gamma, &GridSpec::default()).unwrap();
        for a in [1.0, 2.0, 3.0] {
            let f: Vec<f64> = (0..op.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let df = doeblin_fortet(&op, &f, a).unwrap();
            o.check(df.holds(), || format!("Doeblin–Fortet fails on Knudsen case {case}: {df:?}"));
        }
    }

    let mc = laplace_mc_grid(&ar1(Observable::quadratic()), &InitialLaw::Point(0.5), &[0.3, 1.0], 10, 2000, 9).unwrap();
    for row in &mc {
        let v: Vec<f64> = row.iter().map(|e| e.value).collect();
        check_unit_monotone(o, "ar1 Monte Carlo", &v);
    }

    for lambda in [0.25, 0.5, 0.9] {
        let tol = 1e-6;
        let mut stream = LaplaceStream::operator(std::sync::Arc::new(ar.clone()), ar.law(&InitialLaw::Stationary).unwrap());
        let g = generating_function(|_| Ok(stream.next_value()), 0.0, lambda, tol, 1_000_000).unwrap();
        let exact = 1.0 / (1.0 - lambda);
        o.check(
            g.status == SeriesStatus::Finite && (g.value.unwrap() - exact).abs() <= tol * exact.max(1.0),
            || format!("g(0, {lambda}) = {:?}, expected {exact}", g.value),
        );
    }
}

fn check_unit_monotone(o: &mut Outcome, name: &str, v: &[f64]) {
    o.check(v.iter().all(|x| (0.0..=1.0).contains(x)), || format!("{name}: L outside [0, 1]"));
    o.check(v.windows(2).all(|w| w[1] <= w[0]), || format!("{name}: L not non-increasing in n"));
}

fn check_laplace_series(o: &mut Outcome, name: &str, op0: &TiltedOperator) {
    for g in [0.0, 0.5, 2.0] {
        let op = op0.retilt(g).unwrap();
        let v: Vec<f64> = op.laplace_series(&op.law(&InitialLaw::Stationary).unwrap()).take(30).collect();
        check_unit_monotone(o, name, &v);
    }
}

fn nu_consistency(o: &mut Outcome, name: &str, m: &MarkovModel) {
    let op0 = discretize(m, 0.0, &GridSpec::default()).unwrap();
    let NuOutcome::Finite { nu, .. } = solve_nu(&op0, 2.0, None, NU_TOL, &settings()).unwrap() else {
        o.failures.push(format!("{name}: nu not finite"));
        return;
    };
    let eps = 5.0 * NU_TOL;
    for (gamma, want) in [(nu + eps, SeriesStatus::Finite), (nu - eps, SeriesStatus::Divergent)] {
        let mut exact = LaplaceStream::oracle(m, &InitialLaw::Stationary, gamma).unwrap();
        let op = std::sync::Arc::new(op0.retilt(gamma).unwrap());
        let law = op.law(&InitialLaw::Stationary).unwrap();
        let mut spectral = LaplaceStream::operator(op, law);
        for (route, stream) in [("oracle", &mut exact), ("operator", &mut spectral)] {
            let g = generating_function(|_| Ok(stream.next_value()), gamma, 2.0, 1e-6, 1_000_000).unwrap();
            o.check(g.status == want, || {
                format!("{name} ({route}): g({gamma}, 2) is {} (ratio {}), expected {}", g.status.as_str(), g.ratio, want.as_str())
            });
        }
    }
}

fn criterion_6(o: &mut Outcome) {
    nu_consistency(o, "resampling", &resampling());
    nu_consistency(o, "ar1", &ar1(Observable::quadratic()));
}

fn criterion_7(o: &mut Outcome) {
    let spec = CounterexampleSpec {
        step: 1.0,
        gammas: vec![0.0, 0.5, 1.0, 2.0, 4.0],
        ns: (1..=10).collect(),
        betas: vec![1.0, 0.1, 0.01],
        trials: 2000,
        seed: 7,
    };
    let rows = counterexample_demo(&spec).unwrap();
    for r in &rows {
        let bound = (-(r.n as f64) * r.gamma * r.beta).exp();
        o.check(r.estimate >= bound * (1.0 - 1e-12) && r.holds, || {
            format!("γ = {}, n = {}, β = {}: estimate {} < {bound}", r.gamma, r.n, r.beta, r.estimate)
        });
    }
    let top = rows.iter().filter(|r| r.beta == 0.01).map(|r| r.lower_bound).fold(1.0, f64::min);
    o.check(top >= (-0.4f64).exp() - 1e-15, || format!("β = 0.01 bounds fall to {top}"));
    let ar = discretize(&ar1(Observable::quadratic()), 0.0, &GridSpec::default()).unwrap();
    for g in [0.5, 1.0, 2.0, 4.0] {
        let r = perron(&ar.retilt(g).unwrap(), &settings()).unwrap().r;
        o.check(r < 1.0, || format!("AR(1) contrast: r({g}) = {r}"));
    }
}

const REPORT_CONFIG: &str = r#"[model]
kind = "ar1"
alpha = 0.5

[observable]
kind = "quadratic"

[domain]
n = 200

[tilt]
gammas = [0.25, 0.5, 1.0, 2.0]
"#;

fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.split_once('\n').map_or(String::new(), |(_, rest)| rest.to_string())
}

fn criterion_8(o: &mut Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("report.toml");
    std::fs::write(&cfg, REPORT_CONFIG).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_merg"))
            .args(["report", "--config"])
            .arg(&cfg)
            .args(["--seed", "17", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        o.check(status.status.success(), || format!("run {run} failed: {}", String::from_utf8_lossy(&status.stderr)));
        outputs.push(out);
    }
    for name in ["report.csv", "summary.csv", "statuses.csv"] {
        let (a, b) = (outputs[0].join(name), outputs[1].join(name));
        if a.exists() && b.exists() {
            o.check(body(&a) == body(&b), || format!("{name} differs between runs"));
        } else {
            o.failures.push(format!("{name} missing"));
        }
    }
}

type Criterion = (&'static str, fn(&mut Outcome));

fn main() {
    let criteria: [Criterion; 8] = [
        ("resampling Knudsen gas: r, nu, C_nu", criterion_1),
        ("constant observable: r, r', nu, C_nu", criterion_2),
        ("AR(1) Gaussian: ansatz, r', Monte Carlo vs Riccati", criterion_3),
        ("finite-state brute force against dense eigen-decomposition", criterion_4),
        ("invariant suite", criterion_5),
        ("nu consistency of the generating function", criterion_6),
        ("bounded-step counterexample", criterion_7),
        ("report determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut o = Outcome::new();
        f(&mut o);
        let secs = start.elapsed().as_secs_f64();
        if o.failures.is_empty() {
            println!("criterion {}: PASS  {name} ({secs:.2} s)", i + 1);
        } else {
            failed += 1;
            println!("criterion {}: FAIL  {name} ({secs:.2} s)", i + 1);
            for f in &o.failures {
                println!("    {f}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
