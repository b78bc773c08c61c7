//! `ino`: generate datasets, train operators, evaluate checkpoints.

mod config;
mod eval;
mod gen;
mod gradcheck;
mod inspect;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ino", version, about = "Invariant neural operator pipelines")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset.
    Gen(gen::GenArgs),
    /// Train an operator on a dataset.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint.
    Eval(eval::EvalArgs),
    /// Compare tape gradients with finite differences on a tiny cloud.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Print dataset, collection or checkpoint metadata.
    Inspect(inspect::InspectArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::Inspect(a) => inspect::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
