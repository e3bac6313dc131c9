//! Strict TOML run configuration. Unknown keys are rejected and every
//! validation failure names its key and, when it can be found, its line.

use std::fmt;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::ergodicity::{CounterexampleSpec, ReportSettings};
use crate::error::Error;
use crate::kernels::{DistributionSpec, InitialLaw, MarkovModel, ModelKind, NoiseSpec, Observable, ObservableKind};
use crate::operator::{GridSpec, PerronSettings};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line in the configuration text.
    pub line: Option<usize>,
    /// Dotted key, e.g. `model.alpha`.
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub trials: usize,
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub lambda: f64,
    pub nu_bracket: Option<(f64, f64)>,
    pub nu_tol: f64,
    pub perron: PerronSettings,
    pub series_tol: f64,
    pub series_max: usize,
    pub fit_horizon: usize,
    pub fixed_point_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    /// Significant digits written for every number.
    pub precision: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: MarkovModel,
    pub initial: InitialLaw,
    /// Whether ξ is coercive relative to the weight, as far as it can be decided.
    pub coercive: bool,
    pub grid: GridSpec,
    pub mc: McConfig,
    pub gammas: Vec<f64>,
    pub solve: SolveConfig,
    pub output: OutputConfig,
    pub counterexample: CounterexampleSpec,
    /// SHA-256 of the configuration text, hex encoded.
    pub hash: String,
}

impl RunConfig {
    pub fn report_settings(&self) -> ReportSettings {
        ReportSettings {
            grid: self.grid,
            perron: self.solve.perron,
            lambda: self.solve.lambda,
            nu_bracket: self.solve.nu_bracket,
            nu_tol: self.solve.nu_tol,
            series_tol: self.solve.series_tol,
            series_max: self.solve.series_max,
            fit_horizon: self.solve.fit_horizon,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.mc.seed = seed;
        self.counterexample.seed = seed;
        self
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    model: RawModel,
    observable: RawObservable,
    #[serde(default)]
    domain: RawDomain,
    #[serde(default)]
    mc: RawMc,
    #[serde(default)]
    tilt: RawTilt,
    #[serde(default)]
    solve: RawSolve,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    counterexample: RawCounterexample,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    alpha: Option<f64>,
    noise: Option<NoiseSpec>,
    r0: Option<f64>,
    pi: Option<DistributionSpec>,
    matrix: Option<Vec<Vec<f64>>>,
    stationary: Option<Vec<f64>>,
    base_alpha: Option<f64>,
    base_sigma: Option<f64>,
    initial: Option<String>,
    initial_x: Option<f64>,
    initial_law: Option<DistributionSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservable {
    kind: String,
    value: Option<f64>,
    q: Option<f64>,
    scale: Option<f64>,
    expr: Option<String>,
    values: Option<Vec<f64>>,
    positive_ae: Option<bool>,
    ratio_bound: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDomain {
    xmax: Option<f64>,
    n: usize,
    rule: String,
    weight_exponent: f64,
}

impl Default for RawDomain {
    fn default() -> Self {
        let g = GridSpec::default();
        RawDomain {
            xmax: None,
            n: g.n,
            rule: "gauss_legendre".into(),
            weight_exponent: g.weight_exponent,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMc {
    trials: usize,
    horizon: usize,
    seed: u64,
}

impl Default for RawMc {
    fn default() -> Self {
        RawMc {
            trials: crate::laplace::DEFAULT_TRIALS,
            horizon: 10,
            seed: 0,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTilt {
    gammas: Option<Vec<f64>>,
    start: Option<f64>,
    stop: Option<f64>,
    step: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolve {
    lambda: f64,
    nu_bracket: Option<Vec<f64>>,
    nu_tol: f64,
    perron_tol: f64,
    perron_max_iter: usize,
    series_tol: f64,
    series_max: usize,
    fit_horizon: usize,
    fixed_point_tol: f64,
}

impl Default for RawSolve {
    fn default() -> Self {
        let r = ReportSettings::default();
        RawSolve {
            lambda: r.lambda,
            nu_bracket: None,
            nu_tol: r.nu_tol,
            perron_tol: r.perron.tol,
            perron_max_iter: r.perron.max_iter,
            series_tol: r.series_tol,
            series_max: r.series_max,
            fit_horizon: r.fit_horizon,
            fixed_point_tol: 1e-12,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: String,
    precision: usize,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            dir: "out".into(),
            precision: 17,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawCounterexample {
    step: f64,
    gammas: Vec<f64>,
    ns: Vec<usize>,
    betas: Vec<f64>,
    trials: usize,
}

impl Default for RawCounterexample {
    fn default() -> Self {
        let c = CounterexampleSpec::default();
        RawCounterexample {
            step: c.step,
            gammas: c.gammas,
            ns: c.ns,
            betas: c.betas,
            trials: c.trials,
        }
    }
}

const MAX_GRID: usize = 20_000;
const MAX_TILTS: usize = 100_000;

/// Line of `key` inside `[section]`, or of a dotted `section.key` line.
fn locate(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.rsplit_once('.').unwrap_or(("", dotted));
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs: String = lhs.chars().filter(|c| !c.is_whitespace()).collect();
        let full = if current.is_empty() { lhs.clone() } else { format!("{current}.{lhs}") };
        if full == dotted || (current == section && lhs == key) {
            return Some(i + 1);
        }
    }
    // Fall back to the section header.
    text.lines()
        .position(|l| l.trim() == format!("[{section}]"))
        .map(|i| i + 1)
}

struct Collector<'a> {
    text: &'a str,
    errors: Vec<ConfigError>,
}

impl Collector<'_> {
    fn push(&mut self, key: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line: locate(self.text, key),
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn push_error(&mut self, fallback: &str, e: Error) {
        match e {
            Error::InvalidParameter { name, message } => self.push(name, message),
            other => self.push(fallback, other.to_string()),
        }
    }

    fn check(&mut self, ok: bool, key: &str, message: &str) {
        if !ok {
            self.push(key, message);
        }
    }

    fn require<T: Clone>(&mut self, v: &Option<T>, key: &str, kind: &str) -> Option<T> {
        if v.is_none() {
            self.push(key, format!("required for model kind `{kind}`"));
        }
        v.clone()
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> ConfigError {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let msg = e.message().trim().to_string();
    let key = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .or_else(|| {
            e.span().map(|s| {
                let line_start = text[..s.start.min(text.len())].rfind('\n').map_or(0, |p| p + 1);
                let rest = &text[line_start..];
                rest.split('=').next().unwrap_or("").trim().to_string()
            })
        })
        .unwrap_or_default();
    ConfigError { line, key, message: msg }
}

/// Parses and validates a configuration; all problems found are returned together.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let raw: Raw = toml::from_str(text).map_err(|e| ConfigErrors(vec![toml_error(text, e)]))?;
    let mut c = Collector { text, errors: Vec::new() };

    let observable = build_observable(&mut c, &raw.observable);
    let model = observable.and_then(|obs| build_model(&mut c, &raw.model, obs));
    let initial = build_initial(&mut c, &raw.model);

    let mut coercive = false;
    if let Some(m) = &model {
        if matches!(m.kind(), ModelKind::Ar1 { .. }) {
            let growth = m.observable().growth(m.r0());
            coercive = growth.coercive;
            if growth.ratio_bound.is_none() {
                c.push(
                    "observable.kind",
                    format!(
                        "sup ξ/V is unbounded for V = (1+|x|)^{}; set observable.ratio_bound to override",
                        m.r0()
                    ),
                );
            }
        } else {
            coercive = m.observable().growth(m.r0()).coercive;
        }
        if let (Some(n), ObservableKind::Table(v)) = (m.num_states(), &m.observable().kind) {
            c.check(v.len() == n, "observable.values", "table length must equal the number of states");
        }
        if let (Some(_), InitialLaw::Law(_)) = (m.num_states(), initial.unwrap_or(InitialLaw::Stationary)) {
            c.push("model.initial", "initial laws on finite chains must be `stationary` or `point`");
        }
    }

    let d = &raw.domain;
    c.check((2..=MAX_GRID).contains(&d.n), "domain.n", "grid size must lie in [2, 20000]");
    c.check(d.rule == "gauss_legendre", "domain.rule", "the only supported rule is `gauss_legendre`");
    c.check(
        d.weight_exponent > 0.0 && d.weight_exponent <= 1.0,
        "domain.weight_exponent",
        "weight exponent must lie in (0, 1]",
    );
    if let Some(x) = d.xmax {
        c.check(x > 0.0 && x.is_finite(), "domain.xmax", "xmax must be positive and finite");
    }

    c.check(raw.mc.trials >= 2, "mc.trials", "at least 2 trials are required");
    c.check(raw.mc.horizon <= 100_000, "mc.horizon", "horizon must not exceed 100000");

    let gammas = build_gammas(&mut c, &raw.tilt);

    let s = &raw.solve;
    c.check(s.lambda > 1.0 && s.lambda.is_finite(), "solve.lambda", "lambda must be finite and > 1");
    let nu_bracket = match &s.nu_bracket {
        None => None,
        Some(b) if b.len() == 2 && b[0] >= 0.0 && b[0] < b[1] && b[1].is_finite() => Some((b[0], b[1])),
        Some(_) => {
            c.push("solve.nu_bracket", "bracket must be [lo, hi] with 0 <= lo < hi < inf");
            None
        }
    };
    for (key, v) in [
        ("solve.nu_tol", s.nu_tol),
        ("solve.perron_tol", s.perron_tol),
        ("solve.series_tol", s.series_tol),
        ("solve.fixed_point_tol", s.fixed_point_tol),
    ] {
        c.check(v > 0.0 && v < 1.0, key, "tolerance must lie in (0, 1)");
    }
    c.check(s.perron_max_iter >= 10, "solve.perron_max_iter", "at least 10 iterations are required");
    c.check(s.series_max >= 20, "solve.series_max", "series cap must be at least 20 terms");
    c.check(s.fit_horizon >= 8, "solve.fit_horizon", "the fit needs at least 8 horizons");

    let o = &raw.output;
    c.check(!o.dir.is_empty(), "output.dir", "output directory must not be empty");
    c.check((1..=17).contains(&o.precision), "output.precision", "precision must lie in [1, 17]");

    let ce = &raw.counterexample;
    c.check(ce.step > 0.0 && ce.step.is_finite(), "counterexample.step", "step bound must be positive and finite");
    c.check(ce.trials >= 2, "counterexample.trials", "at least 2 trials are required");
    c.check(
        ce.gammas.iter().all(|g| *g >= 0.0 && g.is_finite()),
        "counterexample.gammas",
        "gammas must be finite and >= 0",
    );
    c.check(ce.betas.iter().all(|b| *b > 0.0 && b.is_finite()), "counterexample.betas", "betas must be finite and > 0");

    if !c.errors.is_empty() {
        return Err(ConfigErrors(c.errors));
    }
    let mut grid = GridSpec::with_n(d.n);
    grid.xmax = d.xmax;
    grid.weight_exponent = d.weight_exponent;
    Ok(RunConfig {
        model: model.expect("validated"),
        initial: initial.expect("validated"),
        coercive,
        grid,
        mc: McConfig {
            trials: raw.mc.trials,
            horizon: raw.mc.horizon,
            seed: raw.mc.seed,
        },
        gammas: gammas.expect("validated"),
        solve: SolveConfig {
            lambda: s.lambda,
            nu_bracket,
            nu_tol: s.nu_tol,
            perron: PerronSettings {
                tol: s.perron_tol,
                max_iter: s.perron_max_iter,
            },
            series_tol: s.series_tol,
            series_max: s.series_max,
            fit_horizon: s.fit_horizon,
            fixed_point_tol: s.fixed_point_tol,
        },
        output: OutputConfig {
            dir: o.dir.clone(),
            precision: o.precision,
        },
        counterexample: CounterexampleSpec {
            step: ce.step,
            gammas: ce.gammas.clone(),
            ns: ce.ns.clone(),
            betas: ce.betas.clone(),
            trials: ce.trials,
            seed: raw.mc.seed,
        },
        hash: hex(&Sha256::digest(text.as_bytes())),
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn build_observable(c: &mut Collector<'_>, o: &RawObservable) -> Option<Observable> {
    let need = |c: &mut Collector<'_>, v: Option<f64>, key: &str| {
        if v.is_none() {
            c.push(key, format!("required for observable kind `{}`", o.kind));
        }
        v
    };
    let kind = match o.kind.as_str() {
        "quadratic" => Some(ObservableKind::Quadratic),
        "identity" => Some(ObservableKind::Power { q: 1.0, scale: 1.0 }),
        "exp_decay" => Some(ObservableKind::ExpDecay),
        "constant" => need(c, o.value, "observable.value").map(ObservableKind::Constant),
        "power" => {
            let q = need(c, o.q, "observable.q");
            q.map(|q| ObservableKind::Power {
                q,
                scale: o.scale.unwrap_or(1.0),
            })
        }
        "table" => {
            if o.values.is_none() {
                c.push("observable.values", "required for observable kind `table`");
            }
            o.values.clone().map(ObservableKind::Table)
        }
        "expression" => match &o.expr {
            None => {
                c.push("observable.expr", "required for observable kind `expression`");
                None
            }
            Some(text) => match Observable::expression(text) {
                Ok(obs) => Some(obs.kind),
                Err(e) => {
                    c.push("observable.expr", e.to_string());
                    None
                }
            },
        },
        other => {
            c.push(
                "observable.kind",
                format!("unknown observable `{other}` (expected quadratic, identity, exp_decay, constant, power, table, expression)"),
            );
            None
        }
    }?;
    if let Some(b) = o.ratio_bound {
        c.check(b >= 0.0 && b.is_finite(), "observable.ratio_bound", "ratio bound must be finite and >= 0");
    }
    let obs = Observable {
        kind,
        positive_ae: o.positive_ae,
        ratio_bound_override: o.ratio_bound,
    };
    match obs.validate() {
        Ok(()) => Some(obs),
        Err(e) => {
            c.push_error("observable.kind", e);
            None
        }
    }
}

fn build_model(c: &mut Collector<'_>, m: &RawModel, obs: Observable) -> Option<MarkovModel> {
    let kind = m.kind.as_str();
    let built = match kind {
        "ar1" => {
            let alpha = c.require(&m.alpha, "model.alpha", kind)?;
            let noise = m.noise.unwrap_or(NoiseSpec::Gaussian { sigma: 1.0 });
            MarkovModel::ar1(alpha, noise, m.r0.unwrap_or(2.0), obs)
        }
        "knudsen_resampling" => {
            let alpha = c.require(&m.alpha, "model.alpha", kind);
            let pi = c.require(&m.pi, "model.pi", kind);
            MarkovModel::knudsen_resampling(alpha?, pi?, obs)
        }
        "knudsen_finite" => {
            let alpha = c.require(&m.alpha, "model.alpha", kind);
            let u = c.require(&m.matrix, "model.matrix", kind);
            MarkovModel::knudsen_finite(alpha?, u?, obs)
        }
        "knudsen_ar1" => {
            let alpha = c.require(&m.alpha, "model.alpha", kind);
            let ba = c.require(&m.base_alpha, "model.base_alpha", kind);
            let bs = c.require(&m.base_sigma, "model.base_sigma", kind);
            MarkovModel::knudsen_ar1(alpha?, ba?, bs?, obs)
        }
        "finite_state" => {
            let p = c.require(&m.matrix, "model.matrix", kind)?;
            match &m.stationary {
                Some(s) => MarkovModel::finite_state_with_stationary(p, s.clone(), obs),
                None => MarkovModel::finite_state(p, obs),
            }
        }
        other => {
            c.push(
                "model.kind",
                format!("unknown model `{other}` (expected ar1, knudsen_resampling, knudsen_finite, knudsen_ar1, finite_state)"),
            );
            return None;
        }
    };
    match built {
        Ok(model) => Some(model),
        Err(e) => {
            c.push_error("model.kind", e);
            None
        }
    }
}

fn build_initial(c: &mut Collector<'_>, m: &RawModel) -> Option<InitialLaw> {
    match m.initial.as_deref().unwrap_or("stationary") {
        "stationary" => Some(InitialLaw::Stationary),
        "point" => match m.initial_x {
            Some(x) if x.is_finite() => Some(InitialLaw::Point(x)),
            _ => {
                c.push("model.initial_x", "a finite starting point is required for `point`");
                None
            }
        },
        "law" => match m.initial_law {
            Some(d) => match d.validate() {
                Ok(()) => Some(InitialLaw::Law(d)),
                Err(e) => {
                    c.push_error("model.initial_law", e);
                    None
                }
            },
            None => {
                c.push("model.initial_law", "a distribution is required for `law`");
                None
            }
        },
        other => {
            c.push("model.initial", format!("unknown initial law `{other}` (expected stationary, point, law)"));
            None
        }
    }
}

fn build_gammas(c: &mut Collector<'_>, t: &RawTilt) -> Option<Vec<f64>> {
    let gammas = match (&t.gammas, t.start, t.stop, t.step) {
        (Some(g), None, None, None) => g.clone(),
        (None, Some(a), Some(b), Some(h)) => {
            if !(h > 0.0 && a <= b && a.is_finite() && b.is_finite()) || (b - a) / h > MAX_TILTS as f64 {
                c.push("tilt.step", "range needs start <= stop, step > 0 and at most 100000 points");
                return None;
            }
            let count = ((b - a) / h + 1e-9).floor() as usize;
            (0..=count).map(|k| a + k as f64 * h).collect()
        }
        (None, None, None, None) => vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
        _ => {
            c.push("tilt.gammas", "give either `gammas` or all of `start`, `stop`, `step`");
            return None;
        }
    };
    if gammas.is_empty() {
        c.push("tilt.gammas", "at least one tilt is required");
        return None;
    }
    if gammas.iter().any(|g| !(*g >= 0.0)) {
        c.push("tilt.gammas", "tilts must be >= 0 (inf is allowed)");
        return None;
    }
    Some(gammas)
}
