//! `qfi-lab`: sampling, bounds, exact oracles, scans and correlators.

mod args;
mod commands;
mod output;
mod pipeline;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qfi_lab::{Error, ErrorCategory};

#[derive(Parser, Debug)]
#[command(name = "qfi-lab", version, about = "Lower bounds to the quantum Fisher information of noisy Jastrow-Gutzwiller chains")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "QFI_LAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample |c_n|² and write a binary pool plus diagnostics.
    Sample(commands::SampleArgs),
    /// Monte Carlo moments and bounds for one parameter point.
    Bounds(commands::BoundsArgs),
    /// Exact-diagonalization QFI, moments and bounds.
    Exact(commands::ExactArgs),
    /// Bounds over an (L, α, p) grid; resumable.
    Scan(commands::ScanArgs),
    /// Pure-state ZZ and XX correlators with power-law fits.
    Correlations(commands::CorrelationArgs),
}

/// Stable exit codes: 2 validation, 3 resource limit, 4 numerical failure,
/// 1 for i/o.
fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Validation => 2,
        ErrorCategory::Resource => 3,
        ErrorCategory::Numerical => 4,
        ErrorCategory::Io => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Exact(a) => commands::exact(a),
        Command::Scan(a) => commands::scan(a),
        Command::Correlations(a) => commands::correlations(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
