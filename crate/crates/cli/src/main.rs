//! `prior-rectify`: rectify pseudo labels under class-prior knowledge, build
//! knowledge files and run the synthetic self-training harness.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 hard constraints
//! infeasible, 3 instance too large for exhaustive search.

mod eval;
mod gen_prior;
mod io;
mod rectify;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "prior-rectify", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a prior-knowledge file from labels or a class prior.
    GenPrior(gen_prior::Args),
    /// Rectify pseudo labels given probabilities or distances.
    Rectify(rectify::Args),
    /// Run the synthetic self-training harness over several arms and seeds.
    Simulate(simulate::Args),
    /// Score predicted labels against ground truth.
    Eval(eval::Args),
}

/// How a successful run ended.
pub enum Status {
    Done,
    /// Outputs were written but the hard constraints cannot be met.
    Infeasible,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenPrior(args) => gen_prior::run(args),
        Command::Rectify(args) => rectify::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Eval(args) => eval::run(args),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => {
            eprintln!("hard constraints are infeasible; wrote the unconstrained argmax");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<prior_rectify::Error>() {
        Some(prior_rectify::Error::InfeasibleCounts(_)) => 2,
        Some(prior_rectify::Error::TooLarge { .. }) => 3,
        _ => 1,
    }
}
