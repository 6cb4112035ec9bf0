//! Command-line front end: stability envelopes, operational schedules,
//! slot-level simulation and baseline comparisons, from JSON configs to
//! CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 infeasible request, 4 numerical failure.

// Validation writes `!(x > 0.0)` so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod manifest;
mod util;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "bandalloc",
    version,
    about = "Stable-throughput regions, permutation schedules and slot simulation \
             for opportunistic band allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace a 2-D slice of the stable-throughput envelope to CSV
    Region(RegionArgs),
    /// Solve a rate point and write the per-slot permutation schedule
    Decompose(DecomposeArgs),
    /// Run the slot simulator over one or more seeds
    Simulate(SimulateArgs),
    /// Compare the exclusive, random-selection and fixed systems
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct RegionArgs {
    /// Network configuration (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// User whose maximum rate is computed, e.g. "s2" (1-based)
    #[arg(long)]
    pub target: String,
    /// User whose rate is swept from 0 to its maximum, e.g. "s1"
    #[arg(long)]
    pub sweep: String,
    /// Fixed rates for the remaining users, e.g. "s3=0.1,s4=0.35"
    #[arg(long, default_value = "")]
    pub fixed: String,
    /// Number of sweep points
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Rate overrides, e.g. "s1=0.2,s2=0.3" (defaults to config arrivals)
    #[arg(long, default_value = "")]
    pub rates: String,
    /// Output schedule path (JSON)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    /// Exclusive permutation schedule
    S,
    /// Independent random selection (collisions possible)
    Shat,
    /// Static assignment
    Fixed,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub variant: Variant,
    /// Schedule JSON (from `decompose`); required for variant 's'
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Selection-policy JSON {"gamma": [[..], ..]}; required for 'shat'
    #[arg(long)]
    pub gamma: Option<PathBuf>,
    /// Static map, e.g. "s1=2,s2=1"; required for 'fixed'
    #[arg(long)]
    pub map: Option<String>,
    /// Slots per run (at least 10000)
    #[arg(long, default_value_t = 100_000)]
    pub horizon: usize,
    /// Comma-separated seed list; each seed is an independent run
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// Queue-sampling stride in slots (default: horizon/4096)
    #[arg(long)]
    pub stride: Option<usize>,
    /// Output prefix; files are written as PREFIX.seedN.trace.csv,
    /// PREFIX.seedN.summary.json and PREFIX.merged.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Query list (JSON): [{"target": "s2", "fixed": {"s1": 0.4}}, ...]
    #[arg(long)]
    pub queries: PathBuf,
    /// Random-selection optimizer restarts
    #[arg(long, default_value_t = bandalloc::baselines::DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Random-selection optimizer iterations per restart
    #[arg(long, default_value_t = bandalloc::baselines::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Region(args) => commands::region::run(args),
        Command::Decompose(args) => commands::decompose::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Compare(args) => commands::compare::run(args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
