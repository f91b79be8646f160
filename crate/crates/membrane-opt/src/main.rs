use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use membrane_opt::run::{execute, Action};

/// Membrane design over rearrangement classes: solve the clamped-membrane
/// state equation, optimize material layouts, and verify the monotonicity,
/// stability, and symmetry structure of the optima.
#[derive(Parser)]
#[command(name = "membrane-opt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state equation for the configured density and report Φ.
    Solve(CommonArgs),
    /// Check the force hypotheses (v_f ≤ f and f ≤ -Δf) and report margins.
    Check(CommonArgs),
    /// Minimize Φ over the configured rearrangement class.
    Minimize(CommonArgs),
    /// Maximize Φ over the configured rearrangement class.
    Maximize(CommonArgs),
    /// Two-material minimization; emits the optimal set and threshold bracket.
    Shape(CommonArgs),
    /// Sweep the volume target and verify the γ-monotonicity theorems.
    SweepGamma(CommonArgs),
    /// Sweep the strong coefficient and verify α-monotonicity/stability.
    SweepAlpha(CommonArgs),
    /// Compare the optimizer against exhaustive subset enumeration.
    Oracle(CommonArgs),
    /// Re-run the minimization from several random starts and report spread.
    Multistart(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for randomized starts.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (action, args) = match &cli.command {
        Command::Solve(a) => (Action::Solve, a),
        Command::Check(a) => (Action::Check, a),
        Command::Minimize(a) => (Action::Minimize, a),
        Command::Maximize(a) => (Action::Maximize, a),
        Command::Shape(a) => (Action::Shape, a),
        Command::SweepGamma(a) => (Action::SweepGamma, a),
        Command::SweepAlpha(a) => (Action::SweepAlpha, a),
        Command::Oracle(a) => (Action::Oracle, a),
        Command::Multistart(a) => (Action::Multistart, a),
    };
    match execute(action, &args.config, args.out.clone(), args.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
