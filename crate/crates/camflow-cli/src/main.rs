//! `camflow`: batch frontend for hybrid motion-basis camera flow
//! estimation.
//!
//! Subcommands: `gen-bases` (build and persist a basis bundle), `fit`
//! (robust weight fit of a bundle to a target flow), `eval` (flow and
//! image metrics), `nonlin-demo` (sum-vs-composition homography
//! experiment), `synth` (scene and suite generation), `bench` (suite fit
//! and metric aggregation).
//!
//! Exit codes: 0 success (also `--help`/`--version`), 1 usage error,
//! 2 data/format error, 3 numerical failure. Every run writes a
//! `run_manifest.json` beside its outputs with the resolved config and
//! input/output checksums. `CAMFLOW_THREADS` caps worker parallelism
//! (default: all cores).

mod commands;
mod config;
mod errors;
mod manifest;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use errors::CliError;

#[derive(Parser)]
#[command(name = "camflow", version, about = "Hybrid motion-basis camera flow toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a hybrid basis bundle (12 physical + N-12 stochastic flows).
    GenBases(commands::gen_bases::Args),
    /// Fit basis weights to a target flow with the robust Laplace loss.
    Fit(commands::fit::Args),
    /// Score a predicted flow against ground truth (EPE, PME, PSNR, SSIM).
    Eval(commands::eval::Args),
    /// Show that summed homography flows are not a homography flow.
    NonlinDemo(commands::nonlin_demo::Args),
    /// Generate synthetic multi-plane scenes or a benchmark suite.
    Synth(commands::synth::Args),
    /// Fit basis subsets across a suite and aggregate metrics.
    Bench(commands::bench::Args),
}

fn init_threads() -> Result<(), CliError> {
    match std::env::var("CAMFLOW_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                CliError::usage(format!("CAMFLOW_THREADS must be a positive integer, got {raw:?}"))
            })?;
            if n == 0 {
                return Err(CliError::usage("CAMFLOW_THREADS must be at least 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::usage(format!("cannot size the thread pool: {e}")))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::GenBases(args) => commands::gen_bases::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::NonlinDemo(args) => commands::nonlin_demo::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Bench(args) => commands::bench::run(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
