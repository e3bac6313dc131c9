//! Subcommand pipelines. Every artifact is a CSV whose first line is
//! `# merg <version> config-hash=<sha256>`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cli::config::RunConfig;
use crate::ergodicity::{
    amplitude, build_report, counterexample_demo, knudsen_chain, knudsen_lambda, knudsen_nu_criterion, solve_nu,
    NuOutcome,
};
use crate::error::{Error, Result};
use crate::kernels::{sample_path, ModelKind};
use crate::laplace::{laplace_mc_grid, LaplaceStream};
use crate::operator::{discretize, perron, r_derivative};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Laplace,
    Spectrum,
    Curve,
    Nu,
    Report,
    KnudsenFixedpoint,
    Counterexample,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Laplace => "laplace",
            Command::Spectrum => "spectrum",
            Command::Curve => "curve",
            Command::Nu => "nu",
            Command::Report => "report",
            Command::KnudsenFixedpoint => "knudsen-fixedpoint",
            Command::Counterexample => "counterexample",
        }
    }
}

/// One CSV artifact.
pub struct Table {
    pub name: &'static str,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Table {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header comment, column names and rows.
    pub fn render(&self, hash: &str) -> String {
        let mut s = format!("# merg {VERSION} config-hash={hash}\n{}\n", self.columns.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

struct Fmt(usize);

impl Fmt {
    fn num(&self, v: f64) -> String {
        format!("{:.*e}", self.0 - 1, v)
    }

    fn opt(&self, v: Option<f64>) -> String {
        v.map_or_else(|| "nan".to_string(), |v| self.num(v))
    }
}

fn int(v: usize) -> String {
    v.to_string()
}

fn text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Computes the tables of `command` without touching the filesystem.
pub fn tables(command: Command, cfg: &RunConfig) -> Result<Vec<Table>> {
    let f = Fmt(cfg.output.precision);
    match command {
        Command::Simulate => simulate(cfg, &f),
        Command::Laplace => laplace(cfg, &f),
        Command::Spectrum => spectrum(cfg, &f),
        Command::Curve => curve(cfg, &f),
        Command::Nu => nu(cfg, &f),
        Command::Report => report(cfg, &f),
        Command::KnudsenFixedpoint => knudsen(cfg, &f),
        Command::Counterexample => counterexample(cfg, &f),
    }
}

/// Runs `command` and writes its CSV files into `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let tables = tables(command, cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    let mut written = Vec::new();
    for t in tables {
        let path = out.join(format!("{}.csv", t.name));
        fs::write(&path, t.render(&cfg.hash)).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

fn simulate(cfg: &RunConfig, f: &Fmt) -> Result<Vec<Table>> {
    let path = sample_path(&cfg.model, &cfg.initial, cfg.mc.horizon, cfg.mc.seed)?;
    let mut t = Table::new("simulate", &["n", "x", "xi"]);
    for (n, &x) in path.iter().enumerate() {
        t.push(vec![int(n), f.num(x), f.num(cfg.model.xi(x)?)]);
    }
    Ok(vec![t])
}

fn laplace(cfg: &RunConfig, f: &Fmt) -> Result<Vec<Table>> {
    let mc = laplace_mc_grid(&cfg.model, &cfg.initial, &cfg.gammas, cfg.mc.horizon, cfg.mc.trials, cfg.mc.seed)?;
    let mut t = Table::new(
        "laplace",
        &["gamma", "n", "mc_value", "mc_std_error", "trials", "oracle_value", "oracle_source"],
    );
    for (gi, &gamma) in cfg.gammas.iter().enumerate() {
        let oracle = if gamma.is_finite() {
            LaplaceStream::oracle(&cfg.model, &cfg.initial, gamma).ok()
        } else {
            None
        };
        let source = oracle.as_ref().map_or("none", |s| s.source().as_str());
        let exact = oracle.map(|mut s| s.take_values(cfg.mc.horizon + 1));
        for (n, e) in mc[gi].iter().enumerate() {
            t.push(vec![
                f.num(gamma),
                int(n),
                f.num(e.value),
                f.num(e.std_error),
                int(e.trials),
                f.opt(exact.as_ref().map(|v| v[n])),
                source.to_string(),
            ]);
        }
    }
    Ok(vec![t])
}

fn spectrum(cfg: &RunConfig, f: &Fmt) -> Result<Vec<Table>> {
    let op0 = discretize(&cfg.model, 0.0, &cfg.grid)?;
    let mut s = Table::new(
        "spectrum",
        &["gamma", "r", "sub_modulus", "gap_ratio", "residual", "left_residual", "iterations"],
    );
    let mut v = Table::new("eigenvectors", &["gamma", "node", "phi", "pi_gamma"]);
    for &gamma in &cfg.gammas {
        let op = op0.retilt(gamma)?;
        let t = perron(&op, &cfg.solve.perron)?;
        s.push(vec![
            f.num(gamma),
            f.num(t.r),
            f.num(t.sub_modulus),
            f.num(t.gap_ratio()),
            f.num(t.residual),
            f.num(t.left_residual),
            int(t.iterations),
        ]);
        for (i, x) in op.nodes().iter().enumerate() {
            v.push(vec![f.num(gamma), f.num(*x), f.num(t.phi[i]), f.num(t.pi_gamma[i])]);
        }
    }
    Ok(vec![s, v])
}

fn curve(cfg: &RunConfig, f: &Fmt) -> Result<Vec<Table>> {
    let op0 = discretize(&cfg.model, 0.0, &cfg.grid)?;
    let mut t = Table::new("curve", &["gamma", "r", "r_prime", "A"]);
    for &gamma in &cfg.gammas {
        let op = op0.retilt(gamma)?;
        let tr = perron(&op, &cfg.solve.perron)?;
        let (a, rp) = if tr.r > 0.0 && gamma.is_finite() {
            (Some(amplitude(&op, &tr, &op.law(&cfg.initial)?)?), Some(r_derivative(&op, &tr)?))
        } else {
            (None, None)
        };
        t.push(vec![f.num(gamma), f.num(tr.r), f.opt(rp), f.opt(a)]);
    }
    Ok(vec![t])
}

fn nu_row(f: &Fmt, nu: &NuOutcome, lambda: f64) -> Vec<String> {
    match *nu {
        NuOutcome::Finite { nu, r_at_nu, iterations } => vec![
            "finite".into(),
            f.num(nu),
            f.num(r_at_nu),
            int(iterations),
            "nan".into(),
            f.num(lambda),
        ],
        NuOutcome::Infinite { r_infinity } => vec![
            "infinite".into(),
            f.num(f64::INFINITY),
            "nan".into(),
            int(0),
            f.num(r_infinity),
            f.num(lambda),
        ],
    }
}

fn nu(cfg: &RunConfig, f: &Fmt) -> Result<Vec<Table>> {
    let op0 = discretize(&cfg.model, 0.0, &cfg.grid)?;
    let nu = solve_nu(&op0, cfg.solve.lambda, cfg.solve.nu_bracket, cfg.solve.nu_tol, &cfg.solve.perron)?;
    let mut t = Table::new("nu", &["status", "nu", "r_at_nu", "iterations", "r_infinity", "lambda"]);
    t.push(nu_row(f, &nu, cfg.solve.lambda));
    Ok(vec![t])
}

fn report(cfg: &RunConfig, f: &Fmt) -> Result<Vec<Table>> {
    let r = build_report(&cfg.model, &cfg.initial, &cfg.gammas, &cfg.report_settings())?;
    let mut rows = Table::new(
        "report",
        &["gamma", "rho", "A", "r_prime", "sub_modulus", "residual", "rho_independent"],
    );
    for row in &r.rows {
        rows.push(vec![
            f.num(row.gamma),
            f.num(row.rho),
            f.num(row.a),
            f.num(row.r_prime),
            f.num(row.sub_modulus),
            f.num(row.residual),
            f.opt(row.rho_independent),
        ]);
    }
    let mut summary = Table::new(
        "summary",
        &[
            "nu",
            "C_nu_formula",
            "C_nu_direct",
            "fit_M",
            "fit_theta",
            "nu_status",
            "C_nu_discrepancy",
            "C_nu_direct_source",
            "fit_spectral_fallback",
            "initial_law",
        ],
    );
    let c = r.c_nu.as_ref();
    summary.push(vec![
        f.num(r.nu.nu().unwrap_or(f64::INFINITY)),
        f.opt(c.map(|c| c.formula)),
        f.opt(c.and_then(|c| c.direct)),
        f.opt(r.fit.map(|x| x.m)),
        f.opt(r.fit.map(|x| x.theta)),
        if r.nu.nu().is_some() { "finite" } else { "infinite" }.into(),
        f.opt(c.and_then(|c| c.discrepancy)),
        c.map_or("none", |c| c.direct_source.as_str()).into(),
        r.fit.map_or("none".into(), |x| x.spectral_fallback.to_string()),
        text(&r.initial_law),
    ]);
    let mut statuses = Table::new("statuses", &["status"]);
    for s in &r.statuses {
        statuses.push(vec![text(s)]);
    }
    Ok(vec![rows, summary, statuses])
}

fn knudsen(cfg: &RunConfig, f: &Fmt) -> Result<Vec<Table>> {
    let ModelKind::Knudsen { alpha, .. } = *cfg.model.kind() else {
        return Err(Error::Precondition("knudsen-fixedpoint needs a Knudsen model".into()));
    };
    let chain = knudsen_chain(&cfg.model, &cfg.grid)?;
    let op0 = discretize(&cfg.model, 0.0, &cfg.grid)?;
    let mut t = Table::new(
        "knudsen",
        &["gamma", "lambda", "status", "method", "iterations", "lower_bound", "perron_r"],
    );
    for &gamma in &cfg.gammas {
        let l = knudsen_lambda(chain.as_ref(), alpha, gamma, cfg.solve.fixed_point_tol)?;
        let r = perron(&op0.retilt(gamma)?, &cfg.solve.perron)?.r;
        t.push(vec![
            f.num(gamma),
            f.num(l.lambda),
            format!("{:?}", l.status).to_lowercase(),
            format!("{:?}", l.method).to_lowercase(),
            int(l.iterations),
            f.num(l.lower_bound),
            f.num(r),
        ]);
    }
    let mut out = vec![t];
    if alpha > 0.5 {
        let c = knudsen_nu_criterion(chain.as_ref(), alpha)?;
        let mut k = Table::new("knudsen_criterion", &["alpha", "nu_finite", "threshold"]);
        k.push(vec![f.num(alpha), c.nu_finite.to_string(), f.num(c.threshold)]);
        out.push(k);
    }
    Ok(out)
}

fn counterexample(cfg: &RunConfig, f: &Fmt) -> Result<Vec<Table>> {
    let rows = counterexample_demo(&cfg.counterexample)?;
    let mut t = Table::new(
        "counterexample",
        &["gamma", "n", "beta", "x", "lower_bound", "estimate", "std_error", "holds"],
    );
    for r in rows {
        t.push(vec![
            f.num(r.gamma),
            int(r.n),
            f.num(r.beta),
            f.num(r.x),
            f.num(r.lower_bound),
            f.num(r.estimate),
            f.num(r.std_error),
            r.holds.to_string(),
        ]);
    }
    Ok(vec![t])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    fn cfg(text: &str) -> RunConfig {
        parse_config(text).unwrap()
    }

    #[test]
    fn numbers_use_seventeen_digits() {
        assert_eq!(Fmt(17).num(0.1), "1.0000000000000001e-1");
        assert_eq!(Fmt(17).num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn spectrum_at_zero_is_one() {
        let c = cfg("[model]\nkind = \"ar1\"\nalpha = 0.5\n[observable]\nkind = \"quadratic\"\n[tilt]\ngammas = [0.0]\n");
        let t = tables(Command::Spectrum, &c).unwrap();
        let r: f64 = t[0].rows[0][1].parse().unwrap();
        assert!((r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn nu_on_constant_observable() {
        let c = cfg("[model]\nkind = \"ar1\"\nalpha = 0.5\n[observable]\nkind = \"constant\"\nvalue = 1.0\n");
        let t = tables(Command::Nu, &c).unwrap();
        let nu: f64 = t[0].rows[0][1].parse().unwrap();
        assert!((nu - 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn text_cells_are_quoted() {
        assert_eq!(text("a, b"), "\"a, b\"");
        assert_eq!(text("plain"), "plain");
    }
}
