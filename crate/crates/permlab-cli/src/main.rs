//! `permlab` — command-line surface of the permuton toolkit.
//!
//! Exit codes: 0 success; 2 argument or input validation failure; 3
//! numerical non-convergence (always when no result exists, and for
//! non-converged results when `--strict` is set).

mod commands;
mod input;
mod output;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "permlab",
    version,
    about = "Permutons and random permutations: sampling, pattern densities, \
             variational solves, phase scans, and structure tests",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Sample(commands::SampleArgs),
    Tsigma(commands::TsigmaArgs),
    Gibbs(commands::GibbsArgs),
    Pmf(commands::PmfArgs),
    Solve(commands::SolveArgs),
    FreeEnergy(commands::FreeEnergyArgs),
    Condition(commands::ConditionArgs),
    PhaseScan(commands::PhaseScanArgs),
    CcCheck(commands::CcCheckArgs),
    SupportDiag(commands::SupportDiagArgs),
    Mallows(commands::MallowsArgs),
    Xi(commands::XiArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sample(args) => commands::sample(args),
        Command::Tsigma(args) => commands::tsigma(args),
        Command::Gibbs(args) => commands::gibbs(args),
        Command::Pmf(args) => commands::pmf(args),
        Command::Solve(args) => commands::solve(args),
        Command::FreeEnergy(args) => commands::free_energy(args),
        Command::Condition(args) => commands::condition(args),
        Command::PhaseScan(args) => commands::phase_scan(args),
        Command::CcCheck(args) => commands::cc_check(args),
        Command::SupportDiag(args) => commands::support_diag(args),
        Command::Mallows(args) => commands::mallows(args),
        Command::Xi(args) => commands::xi(args),
    };
    let code = match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify(&err)
        }
    };
    std::process::exit(code);
}

/// Map hard failures to exit codes: numerical failures 3, everything else
/// (validation, I/O, parsing) 2.
fn classify(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<permlab::Error>() {
        Some(permlab::Error::NonConvergence { .. })
        | Some(permlab::Error::DeltaUnattainable { .. })
        | Some(permlab::Error::SamplingExhausted) => 3,
        _ => 2,
    }
}
