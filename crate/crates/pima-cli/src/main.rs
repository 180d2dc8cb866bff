//! Command-line front end: one-shot simulation runs, benchmark figure data,
//! and the analytic tables (schedule lengths, decision boundaries, pilot
//! sizes).
//!
//! Every run logs its fully-resolved configuration to stderr so any output
//! row can be reproduced from the log alone. Data goes to stdout or `--out`;
//! diagnostics stay on stderr. Exit codes: 0 on success, 2 for configuration
//! errors (including command-line misuse), 3 for IO errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::CliError;

#[derive(Parser)]
#[command(name = "pima", version, about = "Multiple-access protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and emit its CSV row.
    Run(RunArgs),
    /// Write the ten-load benchmark curves for all four protocols.
    Figures(FiguresArgs),
    /// Print the schedule table, decision boundaries and pilot sizes.
    Tables(TablesArgs),
}

/// Everything `run` accepts; unset options fall back to the config file
/// (when given) and then to the built-in defaults.
#[derive(Args)]
struct RunArgs {
    /// Key = value file applied before the flags (flags win).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Protocol to simulate: pima, tdma or saloha.
    #[arg(long)]
    protocol: Option<String>,
    /// Number of users sharing the uplink [default: 20].
    #[arg(long)]
    users: Option<usize>,
    /// Total packet generation rate in packets per slot [default: 0.7].
    #[arg(long)]
    lambda_total: Option<f64>,
    /// Per-user buffer capacity; the oldest packet is evicted on overflow
    /// [default: 3].
    #[arg(long)]
    buffer: Option<usize>,
    /// Slot duration in microseconds [default: 125].
    #[arg(long)]
    slot_us: Option<f64>,
    /// System bandwidth in hertz [default: 1e8].
    #[arg(long)]
    bandwidth_hz: Option<f64>,
    /// Noise power in dB relative to the unit received power [default: -10].
    #[arg(long)]
    noise_db: Option<f64>,
    /// Worst-case count-estimation error target; sizes the pilot
    /// [default: 0.1].
    #[arg(long, conflicts_with = "m1")]
    pe_target: Option<f64>,
    /// Pilot length in samples, overriding the error-target sizing.
    #[arg(long)]
    m1: Option<u32>,
    /// Master seed; all randomness derives from it [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated horizon in slots [default: 1000000].
    #[arg(long)]
    horizon_slots: Option<u64>,
    /// Slots excluded from the metrics while queues reach steady state
    /// [default: 10000].
    #[arg(long)]
    warmup_slots: Option<u64>,
    /// Write the CSV header and row here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FiguresArgs {
    /// Directory receiving fig2_drop.csv and fig3_latency.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seeds aggregated per grid point.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Simulated horizon in slots for every cell.
    #[arg(long, default_value_t = 1_000_000)]
    horizon_slots: u64,
    /// Warmup slots excluded from the metrics.
    #[arg(long, default_value_t = 10_000)]
    warmup_slots: u64,
}

#[derive(Args)]
struct TablesArgs {
    /// Number of users the tables are computed for.
    #[arg(long, default_value_t = 20)]
    users: usize,
    /// Noise power in dB for the decision boundaries and pilot sizes.
    #[arg(long, default_value_t = -10.0)]
    noise_db: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => commands::cmd_run(&args),
        Command::Figures(args) => commands::cmd_figures(&args),
        Command::Tables(args) => commands::cmd_tables(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Io(msg) => write!(f, "{msg}"),
        }
    }
}
