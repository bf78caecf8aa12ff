use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use noisy_synth::commands::{self, Invocation};

#[derive(Parser)]
#[command(
    name = "noisy-synth",
    about = "State-feedback synthesis from noisy input/state data, with model-based and sampling verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured system under seeded inputs and noise.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a controller from trajectory data and a noise model.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo verification of an existing controller.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multiplier searches on explicit quadratic-form pairs.
    Slemma {
        #[command(subcommand)]
        action: SlemmaAction,
    },
    /// Run a named study (stabilization-sweep, aircraft-h2, comparison).
    Exp {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Subcommand)]
enum SlemmaAction {
    /// Search for a multiplier certificate or a counterexample.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { config, seed, out } => {
            run_plain(Some(config), seed, out, commands::cmd_simulate)
        }
        Command::Synth { config, seed, out } => {
            match Invocation::load(Some(config), seed, out) {
                Ok(inv) => match commands::cmd_synth(&inv) {
                    Ok(()) => commands::EXIT_OK,
                    Err(f) => {
                        eprintln!("error: {f}");
                        commands::synth_exit_code(&f)
                    }
                },
                Err(e) => {
                    eprintln!("error: {e}");
                    commands::EXIT_CONFIG
                }
            }
        }
        Command::Verify { config, seed, out } => {
            run_plain(Some(config), seed, out, commands::cmd_verify)
        }
        Command::Slemma { action } => match action {
            SlemmaAction::Check { config, seed, out } => {
                run_plain(Some(config), seed, out, commands::cmd_slemma_check)
            }
        },
        Command::Exp {
            name,
            config,
            seed,
            out,
            trials,
        } => match Invocation::load(config, seed, out) {
            Ok(inv) => match commands::cmd_exp(&inv, &name, trials) {
                Ok(()) => commands::EXIT_OK,
                Err(e) => {
                    eprintln!("error: {e}");
                    commands::EXIT_CONFIG
                }
            },
            Err(e) => {
                eprintln!("error: {e}");
                commands::EXIT_CONFIG
            }
        },
    };
    ExitCode::from(code as u8)
}

fn run_plain<F>(config: Option<PathBuf>, seed: Option<u64>, out: Option<PathBuf>, f: F) -> i32
where
    F: FnOnce(&Invocation) -> noisy_synth_core::error::Result<()>,
{
    match Invocation::load(config, seed, out) {
        Ok(inv) => match f(&inv) {
            Ok(()) => commands::EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                commands::EXIT_CONFIG
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            commands::EXIT_CONFIG
        }
    }
}
