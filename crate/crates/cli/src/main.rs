use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use degenlab_cli::{execute, Command, RunRequest};

#[derive(Parser, Debug)]
#[command(name = "degenlab", version, about = "Solvers for degenerate elliptic and parabolic systems")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel scans; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Solve one shifted elliptic problem.
    EllipticSolve,
    /// Tabulate resolvent norms over a sector.
    ResolventScan,
    /// Tabulate coercivity ratios over a sector.
    CoercivityScan,
    /// Integrate the linear parabolic problem.
    ParabolicRun,
    /// Run the fixed-point solver on the toy model.
    NonlinearRun,
    /// Run the three-species pollutant demo.
    PollutantDemo,
    /// Check the configuration and the boundary conditions.
    Validate,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::EllipticSolve => Command::EllipticSolve,
            Sub::ResolventScan => Command::ResolventScan,
            Sub::CoercivityScan => Command::CoercivityScan,
            Sub::ParabolicRun => Command::ParabolicRun,
            Sub::NonlinearRun => Command::NonlinearRun,
            Sub::PollutantDemo => Command::PollutantDemo,
            Sub::Validate => Command::Validate,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let req = RunRequest {
        command: cli.command.into(),
        config,
        out: cli.out,
        seed: cli.seed,
    };
    match execute(&req) {
        Ok(outcome) => {
            if let Some(e) = &outcome.error {
                eprintln!("error: {e}");
            } else {
                println!("{} files written to {}", outcome.manifest.files.len(), outcome.out_dir.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
