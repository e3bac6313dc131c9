//! Command-line driver: strict configuration parsing, subcommand dispatch
//! and CSV artifacts.

mod config;
mod run;

use std::path::PathBuf;

use clap::Parser;
use serde_json::json;

pub use config::{parse_config, ConfigError, ConfigErrors, McConfig, OutputConfig, RunConfig, SolveConfig};
pub use run::{run, tables, Command, Table, VERSION};

#[derive(Debug, Parser)]
#[command(name = "merg", version, about = "Tilted Markov kernels, Perron curves and Laplace transforms")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `mc.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn emit(kind: &str, message: &str, line: Option<usize>, key: Option<&str>) {
    eprintln!("{}", json!({ "error": kind, "message": message, "line": line, "key": key }));
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("MERG_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("MERG_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Runs the CLI and returns the process exit code. Errors go to stderr as
/// one JSON object per line.
pub fn main_with(cli: Cli) -> i32 {
    if let Err(m) = configure_threads() {
        emit("environment", &m, None, Some("MERG_THREADS"));
        return 2;
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            emit("io", &format!("cannot read {}: {e}", cli.config.display()), None, None);
            return 2;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(ConfigErrors(errors)) => {
            for e in &errors {
                emit("config", &e.message, e.line, Some(&e.key));
            }
            return 2;
        }
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match run(cli.command, &cfg, &out) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            emit(e.kind(), &e.to_string(), None, None);
            1
        }
    }
}
