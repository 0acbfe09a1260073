//! `fiocalc`: batch front end for the index and symbol calculus.
//!
//! Exit status: 0 on success, 2 when a formula check fails beyond tolerance,
//! 1 on usage, config or domain errors.

mod config;
mod error;
mod report;
mod tasks;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use config::{Overrides, Task, OUT_DIR_ENV};
use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "fiocalc", version, about = "Maslov-type indices and principal symbols of Fourier integral operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the canonical-map identities on random samples
    ValidateMap(Common),
    /// Composition index k at cotangent points
    Indices(Common),
    /// Theta_Phi along a path and its Maslov index
    MaslovPath(Common),
    /// Symbols of compositions and adjoints
    ComposeSymbols(Common),
    /// Extract a principal symbol from a kernel by stationary phase
    ExtractSymbol(Common),
    /// Run the acceptance battery
    VerifySuite {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion ids, e.g. A1,A5
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Run the task named by the config's "task" key
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; "-" reads standard input
    config: Option<PathBuf>,
    /// Inline JSON config
    #[arg(long, conflicts_with = "config")]
    json: Option<String>,
    /// Tolerance override
    #[arg(long)]
    tol: Option<f64>,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $FIOCALC_OUT_DIR, else ./fiocalc-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn raw(&self) -> Result<Value> {
        let text = match (&self.config, &self.json) {
            (_, Some(j)) => j.clone(),
            (Some(p), None) if p.as_os_str() == "-" => {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s).map_err(|e| CliError::io("<stdin>", e))?;
                s
            }
            (Some(p), None) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
            (None, None) => return Ok(Value::Object(Default::default())),
        };
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))
    }

    fn overrides(&self) -> Overrides {
        Overrides { tol: self.tol, seed: self.seed, out: self.out.clone() }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    let (task, common, only) = match cli.command {
        Command::ValidateMap(c) => (Some(Task::ValidateMap), c, vec![]),
        Command::Indices(c) => (Some(Task::Indices), c, vec![]),
        Command::MaslovPath(c) => (Some(Task::MaslovPath), c, vec![]),
        Command::ComposeSymbols(c) => (Some(Task::ComposeSymbols), c, vec![]),
        Command::ExtractSymbol(c) => (Some(Task::ExtractSymbol), c, vec![]),
        Command::VerifySuite { common, only } => (Some(Task::VerifySuite), common, only),
        Command::Run(c) => (None, c, vec![]),
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let mut loaded = config::load(common.raw()?, task, &common.overrides(), env_out)?;
    if !only.is_empty() {
        loaded.body.insert("only".into(), Value::from(only));
    }
    let out_dir = loaded.out.clone();
    let report = tasks::run(loaded)?;
    for line in &report.summary {
        println!("{line}");
    }
    for m in &report.mismatches {
        println!("{m}");
    }
    let written = report.write(&out_dir)?;
    println!("wrote {} files to {}", written.len(), out_dir.display());
    Ok(report.mismatches.is_empty())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
