use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tfm-lab", about = "Transaction fee mechanism laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured incentive audits and write per-target reports
    /// plus a summary CSV.
    Audit(CommonArgs),
    /// Sweep the slack parameter and tabulate exact expected miner revenue
    /// against its theoretical ceiling.
    RevenueCurve(CommonArgs),
    /// Evaluate the finite-block welfare ceilings on configured scenarios.
    Welfare(CommonArgs),
    /// Execute the simulated multi-party protocol and diff it against the
    /// ideal functionality.
    MpcSim(CommonArgs),
    /// Re-execute a recorded protocol trace and re-derive the outcome.
    MpcReplay(ReplayArgs),
}

#[derive(clap::Args)]
struct ReplayArgs {
    /// Trace file written by mpc-sim.
    #[arg(long)]
    trace: PathBuf,
    /// Output directory for the replay report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports.
    #[arg(long)]
    out: PathBuf,
    /// Randomness seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, config, out, seed) = match &cli.command {
        Command::Audit(args) => ("audit", &args.config, &args.out, args.seed),
        Command::RevenueCurve(args) => ("revenue-curve", &args.config, &args.out, args.seed),
        Command::Welfare(args) => ("welfare", &args.config, &args.out, args.seed),
        Command::MpcSim(args) => ("mpc-sim", &args.config, &args.out, args.seed),
        Command::MpcReplay(args) => ("mpc-replay", &args.trace, &args.out, 0),
    };
    ExitCode::from(tfm_lab::cli::run(name, config, out, seed) as u8)
}
