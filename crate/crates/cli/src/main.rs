//! `robinsync <command> --config <file>`.
//!
//! Exit codes: 0 success, 2 matrix conditions violated (compatibility, rank,
//! similarity), 3 synthesis or synchronization residual above threshold,
//! 4 config, dimension or I/O error, 5 simulation blow-up or CFL violation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use commands::{Context, Failure};
use config::ExperimentConfig;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Analyze,
    Simulate,
    Synthesize,
    Verify,
    Probe,
}

#[derive(Debug, Parser)]
#[command(
    name = "robinsync",
    version,
    about = "Synchronization by groups for coupled Robin wave systems"
)]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seeds the random direction of the probe data.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: Args) -> Result<(), Failure> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(format!("cannot start thread pool: {e}")))?;
    }
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", args.config.display())))?;
    let config = ExperimentConfig::parse(&text)?;
    let out = args.out.unwrap_or_else(|| PathBuf::from(&config.output.directory));
    commands::prepare_output(&out)?;
    let ctx = Context {
        config,
        out,
        seed: args.seed,
    };
    match args.command {
        Command::Analyze => commands::analyze(&ctx),
        Command::Simulate => commands::simulate_cmd(&ctx),
        Command::Synthesize => commands::synthesize(&ctx),
        Command::Verify => commands::verify(&ctx),
        Command::Probe => commands::probe(&ctx),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
