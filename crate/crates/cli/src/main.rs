use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tailfill_cli::{cmd_compare, cmd_oracle, cmd_simulate};

#[derive(Parser)]
#[command(
    name = "tailfill",
    version,
    about = "Risk-aware tail-waterfilling power allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the learner on one experiment spec and write summary, histogram and outage files.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the primary and comparison configs on the same fading and write deltas.
    Compare {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify the closed-form policy on random inputs.
    Oracle {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate a deliberately corrupted policy instead.
        #[arg(long)]
        mutate: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Simulate { spec, out, seed } => cmd_simulate(&spec, out.as_deref(), seed),
        Command::Compare { spec, out } => cmd_compare(&spec, out.as_deref()),
        Command::Oracle {
            count,
            seed,
            mutate,
        } => cmd_oracle(count, seed, mutate),
    };
    status.into()
}
