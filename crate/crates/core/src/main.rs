use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pastnoc::config::{ExperimentConfig, TraceFormat};
use pastnoc::runner::{self, Execution, RunOptions, RunOutcome};
use pastnoc::Error;

#[derive(Parser)]
#[command(
    name = "pastnoc",
    version,
    about = "Superconducting temporal network-on-chip simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output.dir` or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; 0 uses all cores, 1 runs sequentially.
    #[arg(long)]
    workers: Option<usize>,
    /// Pulse trace format for pulse-mode runs.
    #[arg(long, value_enum)]
    trace: Option<TraceFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Simulate(Common),
    /// Run every point of the configured sweep axes, resuming past results.
    Sweep(Common),
    /// Area manifest, router graph and crossover table.
    Analyze(Common),
    /// Cross-check the cell-level router against the behavioral model.
    Validate(Common),
}

fn run(cli: Cli) -> pastnoc::Result<RunOutcome> {
    let (Command::Simulate(c) | Command::Sweep(c) | Command::Analyze(c) | Command::Validate(c)) =
        &cli.command;
    let cfg = ExperimentConfig::load(&c.config)?;
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let execution = match c.workers {
        Some(1) => Execution::Sequential,
        Some(0) | None => Execution::Parallel(None),
        Some(n) => Execution::Parallel(Some(n)),
    };
    let opts = RunOptions {
        out,
        seed: c.seed,
        execution,
        trace: c.trace,
    };
    match cli.command {
        Command::Simulate(_) => runner::simulate(&cfg, &opts),
        Command::Sweep(_) => runner::sweep(&cfg, &opts),
        Command::Analyze(_) => runner::analyze(&cfg, &opts),
        Command::Validate(_) => runner::validate(&cfg, &opts),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(o) if o.mismatches > 0 => {
            eprintln!(
                "{} outputs differ between the cell-level and behavioral models",
                o.mismatches
            );
            ExitCode::from(3)
        }
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            if o.resumed > 0 {
                eprintln!("{} points reused from a previous run", o.resumed);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. }
                | Error::MissingField(_)
                | Error::InadmissiblePattern(_)
                | Error::UnsupportedPolicy(_) => 2,
                Error::InvalidEpochConfig(_)
                | Error::InvalidGeometry(_)
                | Error::InvalidSize(_) => 2,
                Error::Mismatch(_) => 3,
                _ => 1,
            })
        }
    }
}
