use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hitl_cli::{configure_workers, load_config, run_experiment, CliError, Command, Overrides};

/// Human-in-the-loop decision simulations.
#[derive(Parser)]
#[command(name = "hitl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate trials of a single decision model.
    Simulate(RunArgs),
    /// Compute the reward-rate surface over the gain plane.
    RewardMap(RunArgs),
    /// Run the closed-loop task dispatcher.
    Supervise(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per simulation, or per surface cell.
    #[arg(long)]
    trials: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::RewardMap(a) => (Command::RewardMap, a),
        Cmd::Supervise(a) => (Command::Supervise, a),
    };
    match execute(command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command, args: &RunArgs) -> Result<(), CliError> {
    configure_workers()?;
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        trials: args.trials,
    };
    let config = load_config(&args.config, &overrides)?;
    let artifacts = run_experiment(command, &config)?;
    for path in &artifacts.files {
        println!("{}", path.display());
    }
    Ok(())
}
