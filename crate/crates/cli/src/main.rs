//! `bpkit`: runs algebra audits, transform evaluations, section scans,
//! intersection-body tests and Busemann-Petty comparisons from a layered
//! TOML configuration.
//!
//! Exit status: 0 pass, 1 invariant failure, 2 configuration or parameter
//! error, 3 inconclusive verdict when a conclusive one was required.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Exit, Failure};
use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "bpkit", version, about = "Busemann-Petty experiments on block-structured convex bodies")]
struct Cli {
    /// TOML file layered over the defaults and the preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Directory for summary.txt and CSV tables.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Built-in preset: krrr-table or r5-counterexample.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, value_name = "K")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every algebraic identity on basis units and random inputs.
    AlgebraAudit,
    /// Compare bodies, search for a counterexample, or tabulate cases.
    Bp,
    /// Evaluate a spherical transform or dump a multiplier table.
    Transform,
    /// Scan section volumes of bodies.k and check the section identity.
    Sections,
    /// Sign test of M^{1+lambda-N} rho^lambda for bodies.k.
    IntersectionTest,
    /// Print the fully layered configuration as TOML.
    ShowConfig,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let user = match &cli.config {
        Some(path) => Some((
            std::fs::read_to_string(path).map_err(|e| Failure {
                exit: Exit::ConfigError,
                message: format!("cannot read {}: {e}", path.display()),
            })?,
            path.display().to_string(),
        )),
        None => None,
    };
    let mut cfg = config::load(
        cli.preset.as_deref(),
        user.as_ref().map(|(text, origin)| (text.as_str(), origin.as_str())),
    )?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Exit, Failure> {
    let cfg = resolve(cli)?;
    if cfg.jobs > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    }
    let (report, exit) = match cli.command {
        Command::AlgebraAudit => commands::algebra_audit(&cfg)?,
        Command::Bp => commands::bp(&cfg)?,
        Command::Transform => commands::transform(&cfg)?,
        Command::Sections => commands::sections(&cfg)?,
        Command::IntersectionTest => commands::intersection_test(&cfg)?,
        Command::ShowConfig => {
            let text = toml::to_string(&cfg).map_err(|e| Failure {
                exit: Exit::ConfigError,
                message: e.to_string(),
            })?;
            print!("{text}");
            return Ok(Exit::Pass);
        }
    };
    report.emit(cfg.out.as_ref()).map_err(|e| Failure {
        exit: Exit::ConfigError,
        message: format!("{e:#}"),
    })?;
    Ok(exit)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exit = match run(&cli) {
        Ok(exit) => exit,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.exit
        }
    };
    ExitCode::from(exit as u8)
}
