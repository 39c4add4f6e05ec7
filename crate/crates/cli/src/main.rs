//! `varexp`: driver for the solver, the structure-condition sweeps and the
//! inequality harness.
//!
//! Exit status is 0 when every pass flag in the emitted CSVs holds, 1 when
//! some check failed, and 2 on a configuration or model error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use varexp_cli::config::{self, ConfigDoc, ConfigError};
use varexp_cli::run;

#[derive(Debug, Parser)]
#[command(name = "varexp", version, about = "Variable-exponent parabolic solver and inequality checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,

    /// Flux model: `prototype` or `adversarial`.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Exponent spec: `constant <v>`, `affine <a> <b1> <b2> <bt>` or `bump`.
    #[arg(long, global = true)]
    exponent: Option<String>,

    #[arg(long, global = true)]
    samples: Option<usize>,

    #[arg(long, global = true)]
    truncations: Option<usize>,

    /// repair, interpolation, korn, gn or all.
    #[arg(long, global = true)]
    suite: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Implicit Euler Galerkin run with energy ledger and snapshots.
    Solve,
    /// Sample the structure conditions of the flux and lower-order term.
    VerifyStructure,
    /// Calibrate-then-validate inequality suites.
    Inequalities,
    /// Truncated modulars of the Poincaré counterexample and its radial profiles.
    Counterexample,
    /// Nested-level Galerkin study.
    Convergence,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Solve => "solve",
            Cmd::VerifyStructure => "verify-structure",
            Cmd::Inequalities => "inequalities",
            Cmd::Counterexample => "counterexample",
            Cmd::Convergence => "convergence",
        }
    }
}

enum Failure {
    Config(ConfigError),
    Model(varexp_core::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // wrapped model errors already start with their name
            Failure::Config(e @ ConfigError::Model { .. }) => write!(f, "{e}"),
            Failure::Config(e) => write!(f, "{}: {e}", e.name()),
            Failure::Model(e) => write!(f, "{e}"),
        }
    }
}

fn load(cli: &Cli) -> Result<config::RunConfig, Failure> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Model(varexp_core::Error::Io(format!("{}: {e}", path.display()))))?,
        None => String::new(),
    };
    let mut doc = ConfigDoc::parse(&text).map_err(Failure::Config)?;
    let mut set = |key: &str, value: Option<String>| match value {
        Some(v) => doc.set(key, v).map_err(Failure::Config),
        None => Ok(()),
    };
    set("command", Some(cli.command.name().to_string()))?;
    set("seed", cli.seed.map(|s| s.to_string()))?;
    set("output_dir", cli.out.as_ref().map(|p| p.display().to_string()))?;
    set("flux", cli.model.clone())?;
    set("exponent", cli.exponent.clone())?;
    set("samples", cli.samples.map(|n| n.to_string()))?;
    set("truncations", cli.truncations.map(|n| n.to_string()))?;
    set("suite", cli.suite.clone())?;
    doc.validate().map_err(Failure::Config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = load(&cli).and_then(|c| run::run(&c).map(|o| (c, o)).map_err(Failure::Model));
    match outcome {
        Ok((c, o)) => {
            if !cli.quiet {
                for line in &o.summary {
                    println!("{line}");
                }
                println!(
                    "{}: {} files in {} ({})",
                    cli.command.name(),
                    o.manifest.entries().len(),
                    c.output_dir.display(),
                    if o.pass { "all checks passed" } else { "some checks failed" }
                );
            }
            if o.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("varexp: {e}");
            ExitCode::from(2)
        }
    }
}
