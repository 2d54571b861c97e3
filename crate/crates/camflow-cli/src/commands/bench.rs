//! `camflow bench`: fit every scene of a generated suite with three basis
//! sets (full hybrid, the 12 physical bases, and an 8-basis affine subset)
//! plus a single-homography baseline, then report per-scene and mean
//! end-point errors.

use std::fs;
use std::path::{Path, PathBuf};

use camflow::basis::{hybrid_basis, BasisSet, BasisSpec, DEFAULT_BASIS_COUNT,
    DEFAULT_GAUSSIAN_SCALE, DEFAULT_RANDOM_SAMPLES, PHYSICAL_BASIS_COUNT};
use camflow::evaluation::{epe, psnr, ssim};
use camflow::geometry::{fit_homography_dlt, flow_from_homography, FlowField, PointPairs};
use camflow::imaging::warp_backward;
use camflow::robustfit::{fit_weights_laplace, synthesize_flow, FitConfig};
use camflow::synth::{benchmark_suite_on_grid, SceneSample, DEFAULT_SCENE_HEIGHT,
    DEFAULT_SCENE_WIDTH};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config;
use crate::errors::CliError;
use crate::manifest::RunRecorder;

/// Physical bases whose monomials are affine in x and y: the constant,
/// linear, and bilinear terms for both flow components.
pub const AFFINE_SUBSET: [usize; 8] = [0, 1, 2, 3, 6, 7, 8, 9];

#[derive(clap::Args)]
pub struct Args {
    /// Number of suite scenes.
    #[arg(long)]
    count: Option<usize>,
    /// Master seed for the suite.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Scene raster height.
    #[arg(long)]
    height: Option<usize>,
    /// Scene raster width.
    #[arg(long)]
    width: Option<usize>,
    /// Total basis count for the full hybrid set.
    #[arg(long)]
    n: Option<usize>,
    /// Random homography samples drawn when building stochastic bases.
    #[arg(long)]
    samples: Option<usize>,
    /// Gaussian scale for stochastic homography coefficients.
    #[arg(long)]
    scale: Option<f64>,
    /// Seed for the stochastic bases.
    #[arg(long)]
    basis_seed: Option<u64>,
    /// Output directory for the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    count: Option<usize>,
    master_seed: Option<u64>,
    height: Option<usize>,
    width: Option<usize>,
    n: Option<usize>,
    samples: Option<usize>,
    scale: Option<f64>,
    basis_seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    count: usize,
    master_seed: u64,
    height: usize,
    width: usize,
    n: usize,
    samples: usize,
    scale: f64,
    basis_seed: u64,
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct SceneRecord {
    index: usize,
    planes: usize,
    dynamic_objects: usize,
    epe_full: f64,
    epe_physical: f64,
    epe_affine: f64,
    epe_homography: f64,
    psnr_db: f64,
    ssim: f64,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    count: usize,
    master_seed: u64,
    n: usize,
    mean_epe_full: f64,
    mean_epe_physical: f64,
    mean_epe_affine: f64,
    mean_epe_homography: f64,
    full_le_physical: bool,
    physical_le_affine: bool,
    scenes: Vec<SceneRecord>,
}

/// Point pairs (source grid position, position displaced by the ground-truth
/// flow) sampled at every valid pixel, for the homography baseline.
fn pairs_from_flow(flow: &FlowField, valid: &camflow::imaging::Mask) -> PointPairs {
    let grid = flow.grid();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (row, col, x, y) in grid.iter_coords() {
        if !valid.at(row, col) {
            continue;
        }
        let (u, v) = flow.at(row, col);
        src.push([x, y]);
        dst.push([x + u, y + v]);
    }
    PointPairs { src, dst }
}

fn eval_scene(
    index: usize,
    sample: &SceneSample,
    sets: &[&BasisSet; 3],
    fit: &FitConfig,
) -> Result<SceneRecord, CliError> {
    let mut errors = [0.0_f64; 3];
    let mut full_fit_flow: Option<FlowField> = None;
    for (slot, set) in sets.iter().enumerate() {
        let (weights, _, _) = fit_weights_laplace(set, &sample.gt_flow, fit, Some(&sample.valid))?;
        let fitted = synthesize_flow(set, &weights)?;
        errors[slot] = epe(&fitted, &sample.gt_flow, Some(&sample.valid))?.value;
        if slot == 0 {
            full_fit_flow = Some(fitted);
        }
    }

    let pairs = pairs_from_flow(&sample.gt_flow, &sample.valid);
    let (h, _) = fit_homography_dlt(&pairs)?;
    let h_flow = flow_from_homography(&h, sample.gt_flow.grid())?;
    let epe_homography = epe(&h_flow, &sample.gt_flow, Some(&sample.valid))?.value;

    let full_fit_flow = full_fit_flow.expect("first basis set always fitted");
    let (i_a, i_b) = sample
        .images
        .as_ref()
        .ok_or_else(|| CliError::data("suite scene is missing rendered images"))?;
    let (warped, warp_valid) = warp_backward(i_b, &full_fit_flow)?;
    let photo_valid = sample.valid.intersect(&warp_valid)?;
    let psnr_db = psnr(i_a, &warped, Some(&photo_valid))?.value;
    let ssim_value = ssim(i_a, &warped, Some(&photo_valid))?.value;

    Ok(SceneRecord {
        index,
        planes: sample.spec.planes.len(),
        dynamic_objects: sample.spec.dynamic_objects.len(),
        epe_full: errors[0],
        epe_physical: errors[1],
        epe_affine: errors[2],
        epe_homography,
        psnr_db,
        ssim: ssim_value,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(format!("cannot encode {}: {e}", path.display())))?;
    body.push('\n');
    fs::write(path, body)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn run(args: Args) -> Result<(), CliError> {
    let file: FileConfig = config::load(args.config.as_deref())?;
    let resolved = Resolved {
        count: args.count.or(file.count).unwrap_or(20),
        master_seed: args.master_seed.or(file.master_seed).unwrap_or(0),
        height: args.height.or(file.height).unwrap_or(DEFAULT_SCENE_HEIGHT),
        width: args.width.or(file.width).unwrap_or(DEFAULT_SCENE_WIDTH),
        n: args.n.or(file.n).unwrap_or(DEFAULT_BASIS_COUNT),
        samples: args
            .samples
            .or(file.samples)
            .unwrap_or(DEFAULT_RANDOM_SAMPLES),
        scale: args.scale.or(file.scale).unwrap_or(DEFAULT_GAUSSIAN_SCALE),
        basis_seed: args.basis_seed.or(file.basis_seed).unwrap_or(0),
        out: args
            .out
            .or(file.out)
            .ok_or_else(|| CliError::usage("missing --out directory"))?,
    };
    if resolved.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    if resolved.n < PHYSICAL_BASIS_COUNT {
        return Err(CliError::usage(format!(
            "--n must be at least {PHYSICAL_BASIS_COUNT} so the physical subset exists"
        )));
    }

    let recorder = RunRecorder::new("bench");
    let spec = BasisSpec {
        height: resolved.height,
        width: resolved.width,
        n: resolved.n,
        num_random_samples: resolved.samples,
        seed: resolved.basis_seed,
        gaussian_scale: resolved.scale,
    };
    let full = hybrid_basis(&spec)?;
    let physical = full.subset(&(0..PHYSICAL_BASIS_COUNT).collect::<Vec<_>>())?;
    let affine = full.subset(&AFFINE_SUBSET)?;
    let sets = [&full, &physical, &affine];
    let fit = FitConfig::default();

    let samples = benchmark_suite_on_grid(
        resolved.count,
        resolved.master_seed,
        resolved.height,
        resolved.width,
    )?;
    let mut records = samples
        .par_iter()
        .enumerate()
        .map(|(i, sample)| eval_scene(i, sample, &sets, &fit))
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|r| r.index);

    let count = records.len() as f64;
    let mean = |f: fn(&SceneRecord) -> f64| records.iter().map(f).sum::<f64>() / count;
    let report = BenchReport {
        count: resolved.count,
        master_seed: resolved.master_seed,
        n: resolved.n,
        mean_epe_full: mean(|r| r.epe_full),
        mean_epe_physical: mean(|r| r.epe_physical),
        mean_epe_affine: mean(|r| r.epe_affine),
        mean_epe_homography: mean(|r| r.epe_homography),
        full_le_physical: mean(|r| r.epe_full) <= mean(|r| r.epe_physical),
        physical_le_affine: mean(|r| r.epe_physical) <= mean(|r| r.epe_affine),
        scenes: records,
    };

    fs::create_dir_all(&resolved.out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", resolved.out.display())))?;
    write_json(&report, &resolved.out.join("bench_report.json"))?;
    let mut recorder = recorder;
    recorder.output_tree(&resolved.out)?;
    recorder.finish(&resolved, &resolved.out)?;

    println!(
        "mean EPE over {} scenes: full({}) {:.6} px, physical(12) {:.6} px, affine(8) {:.6} px, homography {:.6} px",
        report.count, report.n, report.mean_epe_full, report.mean_epe_physical,
        report.mean_epe_affine, report.mean_epe_homography
    );
    println!(
        "ordering: full <= physical: {}, physical <= affine: {}",
        report.full_le_physical, report.physical_le_affine
    );
    Ok(())
}
