//! `camflow gen-bases`: build a hybrid basis bundle and persist it.

use std::path::PathBuf;

use camflow::basis::{
    hybrid_basis, save_bundle, BasisSpec, DEFAULT_BASIS_COUNT, DEFAULT_GAUSSIAN_SCALE,
    DEFAULT_GRID_HEIGHT, DEFAULT_GRID_WIDTH, DEFAULT_RANDOM_SAMPLES,
};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::errors::CliError;
use crate::manifest::RunRecorder;

#[derive(clap::Args)]
pub struct Args {
    /// Grid height in pixels.
    #[arg(long)]
    height: Option<usize>,
    /// Grid width in pixels.
    #[arg(long)]
    width: Option<usize>,
    /// Total basis count (12 physical + n-12 stochastic).
    #[arg(long)]
    n: Option<usize>,
    /// Random homography draws feeding the stochastic extraction.
    #[arg(long)]
    samples: Option<usize>,
    /// Standard deviation of the random homography coefficients.
    #[arg(long)]
    scale: Option<f64>,
    /// RNG seed for the stochastic bases.
    #[arg(long)]
    seed: Option<u64>,
    /// Output bundle directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    height: Option<usize>,
    width: Option<usize>,
    n: Option<usize>,
    samples: Option<usize>,
    scale: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    height: usize,
    width: usize,
    n: usize,
    samples: usize,
    scale: f64,
    seed: u64,
    out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let file: FileConfig = config::load(args.config.as_deref())?;
    let resolved = Resolved {
        height: args.height.or(file.height).unwrap_or(DEFAULT_GRID_HEIGHT),
        width: args.width.or(file.width).unwrap_or(DEFAULT_GRID_WIDTH),
        n: args.n.or(file.n).unwrap_or(DEFAULT_BASIS_COUNT),
        samples: args
            .samples
            .or(file.samples)
            .unwrap_or(DEFAULT_RANDOM_SAMPLES),
        scale: args.scale.or(file.scale).unwrap_or(DEFAULT_GAUSSIAN_SCALE),
        seed: args.seed.or(file.seed).unwrap_or(0),
        out: args
            .out
            .or(file.out)
            .ok_or_else(|| CliError::usage("missing --out bundle directory"))?,
    };

    let recorder = RunRecorder::new("gen-bases");
    let spec = BasisSpec {
        height: resolved.height,
        width: resolved.width,
        n: resolved.n,
        num_random_samples: resolved.samples,
        seed: resolved.seed,
        gaussian_scale: resolved.scale,
    };
    let set = hybrid_basis(&spec)?;
    save_bundle(&set, &resolved.out)?;

    let mut recorder = recorder;
    recorder.output_tree(&resolved.out)?;
    recorder.finish(&resolved, &resolved.out)?;
    println!(
        "wrote {} bases ({}x{} grid, seed {}) to {}",
        set.n(),
        resolved.height,
        resolved.width,
        resolved.seed,
        resolved.out.display()
    );
    Ok(())
}
