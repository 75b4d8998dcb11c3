//! Command-line front end: `nlocp <subcommand> [--config PATH] [overrides]`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nonlocal_ocp::app::{self, Subcommand};
use nonlocal_ocp::config::{self, Overrides, RunConfig};
use nonlocal_ocp::{Error, Variant};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    SolveState,
    SolveRocp,
    SolveOcp,
    Sweep,
    CheckInvariants,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Regional,
    Full,
}

/// Fractional p-Laplace state equations with a kernel-coefficient control.
#[derive(Debug, Parser)]
#[command(name = "nlocp", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration or a manifest from an earlier run; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Regularization eps (makes solve-state regularized).
    #[arg(long)]
    eps: Option<f64>,
    /// Regularization cutoff level n (makes solve-state regularized).
    #[arg(long = "n-reg")]
    n_reg: Option<u64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Command::SolveState => Subcommand::SolveState,
        Command::SolveRocp => Subcommand::SolveRocp,
        Command::SolveOcp => Subcommand::SolveOcp,
        Command::Sweep => Subcommand::Sweep,
        Command::CheckInvariants => Subcommand::CheckInvariants,
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        epsilon: cli.eps,
        n: cli.n_reg,
        p: cli.p,
        s: cli.s,
        m: cli.m,
        variant: cli.variant.map(|v| match v {
            VariantArg::Regional => Variant::Regional,
            VariantArg::Full => Variant::Full,
        }),
        regularize_state: command == Subcommand::SolveState && (cli.eps.is_some() || cli.n_reg.is_some()),
    };
    let outcome = load(cli.config, &overrides).and_then(|config| app::run(command, &config));
    match outcome {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("{}", file.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: checks failed, see {}", command.name(), app::MANIFEST);
                ExitCode::from(1)
            }
        }
        Err(error) => {
            eprintln!("{}", app::error_json(&error));
            ExitCode::from(app::exit_code(&error) as u8)
        }
    }
}

fn load(path: Option<PathBuf>, overrides: &Overrides) -> Result<RunConfig, Error> {
    match path {
        Some(path) => config::parse_config(&path, overrides),
        None => config::finish(RunConfig::default(), overrides),
    }
}
