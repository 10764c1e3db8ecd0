use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedchain_core::cli::{self, LedgerView};

#[derive(Parser)]
#[command(name = "fedchain", version, about = "Federated learning on a deterministic, replayable ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run {
        /// TOML task config (global_args, train_args, algorithm).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json, blocks.log and model.bin.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a block log and print a view of the chain.
    Ledger(LedgerArgs),
    /// Verify model ownership against an on-chain token.
    Verify {
        /// Model file written by `run`.
        #[arg(long)]
        model: PathBuf,
        /// Block log written by `run`.
        #[arg(long)]
        log: PathBuf,
        /// Token id to check against.
        #[arg(long)]
        token: u64,
        /// Claimed watermark key seed.
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Args)]
struct LedgerArgs {
    /// Block log to replay.
    #[arg(long)]
    log: PathBuf,
    /// Print one block by index.
    #[arg(long, conflicts_with_all = ["records", "balances", "tokens"])]
    block: Option<u64>,
    /// List the training records of one round.
    #[arg(long, conflicts_with_all = ["balances", "tokens"])]
    records: Option<u64>,
    /// Print incentive balances.
    #[arg(long, conflicts_with = "tokens")]
    balances: bool,
    /// Print model tokens.
    #[arg(long)]
    tokens: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out } => cli::cmd_run(&config, &out),
        Command::Ledger(args) => {
            let view = if let Some(index) = args.block {
                LedgerView::Block(index)
            } else if let Some(round) = args.records {
                LedgerView::Records(round)
            } else if args.balances {
                LedgerView::Balances
            } else if args.tokens {
                LedgerView::Tokens
            } else {
                LedgerView::Summary
            };
            cli::cmd_ledger(&args.log, view)
        }
        Command::Verify { model, log, token, seed } => {
            cli::cmd_verify(&model, &log, token, seed)
        }
    };
    ExitCode::from(code as u8)
}
