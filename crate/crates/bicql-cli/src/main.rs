mod artifacts;
mod commands;
mod config;

use clap::{Parser, Subcommand};

use commands::{cmd_diagnose, cmd_eval, cmd_gen, cmd_train, config_arg};

/// Offline inverse reinforcement learning on finite MDPs: generate benchmark
/// environments and datasets, train the bi-level learner, evaluate against
/// the ground truth, and check fixed-point diagnostics.
#[derive(Parser)]
#[command(name = "bicql", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the environment and collect offline + expert datasets.
    Gen {
        #[arg(long)]
        config: String,
    },
    /// Train the bi-level learner on the generated datasets.
    Train {
        #[arg(long)]
        config: String,
    },
    /// Score the learned reward against the ground truth.
    Eval {
        #[arg(long)]
        config: String,
        /// Self-test: evaluate the true reward instead of the learned one
        /// (normalized score must come out exactly 1).
        #[arg(long)]
        use_true_reward: bool,
    },
    /// Fixed-point residuals and contraction statistics of a trained run.
    Diagnose {
        #[arg(long)]
        config: String,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = (|| match cli.command {
        Command::Gen { config } => cmd_gen(&config_arg(&config)?),
        Command::Train { config } => cmd_train(&config_arg(&config)?),
        Command::Eval { config, use_true_reward } => cmd_eval(&config_arg(&config)?, use_true_reward),
        Command::Diagnose { config } => cmd_diagnose(&config_arg(&config)?),
    })();
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(1);
        }
    }
}
