//! `microcash` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input files, unreadable paths, I/O failures.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Pretty-printed JSON.
    Json,
    /// CSV preceded by `# key=value` input lines.
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "microcash", version, about = "Escrow sizing, lottery draws and chain simulation for concurrent micropayments")]
pub struct Cli {
    /// Seed for randomized runs; always echoed in the output.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Progress on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Payment escrow and minimum penalty deposit for a set of escrow terms.
    Bounds(BoundsArgs),
    /// Run a scenario config end to end on the simulated chain.
    Simulate(SimulateArgs),
    /// List the winning sequence numbers drawn in a round of a saved chain.
    Draw(DrawArgs),
    /// Per-role ticket throughput and operation counts.
    Bench(BenchArgs),
    /// On-chain overhead of a service workload.
    Workload(WorkloadArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Exact,
    Independent,
    Both,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Winning probability, as a decimal or `a/b`.
    #[arg(long)]
    pub p: String,
    /// Value of a winning ticket, in coins.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: f64,
    /// Tickets per round.
    #[arg(long)]
    pub tkt_rate: u64,
    /// Escrow lifetime in issue rounds.
    #[arg(long)]
    pub lifetime: u64,
    #[arg(long)]
    pub merchants: u32,
    /// Issue rounds per lottery draw.
    #[arg(long, default_value_t = 1)]
    pub draw_len: u64,
    /// Rounds between the end of a draw group and its draw.
    #[arg(long, default_value_t = 6)]
    pub d_draw: u64,
    /// Rounds a drawn winner stays redeemable.
    #[arg(long, default_value_t = 6)]
    pub d_redeem: u64,
    /// Allowed probability that independent winners exceed the escrow.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Both)]
    pub variant: VariantArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Also write per-block metrics as CSV.
    #[arg(long)]
    pub blocks_csv: Option<PathBuf>,
    /// Also write the final chain as a JSON snapshot.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Run the early-withdrawal attempts against the same escrow terms too.
    #[arg(long)]
    pub front_running: bool,
}

#[derive(Debug, Args)]
pub struct DrawArgs {
    /// Chain snapshot written by `simulate --snapshot`.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Draw round (block height whose VDF value seeds the draw).
    #[arg(long)]
    pub round: u64,
    /// Restrict to one escrow id (hex).
    #[arg(long)]
    pub escrow: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = microcash::sim::MIN_BENCH_ITERATIONS)]
    pub iterations: u64,
}

#[derive(Debug, Args)]
pub struct WorkloadArgs {
    /// Workload TOML file.
    #[arg(long)]
    pub spec: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
