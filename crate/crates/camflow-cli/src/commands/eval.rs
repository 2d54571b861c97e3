//! `camflow eval`: score a predicted flow against ground truth.
//!
//! Always reports end-point error; adds point matching error when
//! `--pairs` is given, and PSNR/SSIM of the backward-warped second image
//! when both images are given. Also writes an 8-bit error heatmap
//! (per-pixel end-point error, normalized to its maximum).

use std::fs;
use std::path::{Path, PathBuf};

use camflow::evaluation::{epe, pme, psnr, ssim, MetricReport, Motion};
use camflow::geometry::PointPairs;
use camflow::imaging::{read_mask_pgm, read_pgm, warp_backward, write_pgm, ImageGray, Mask, PgmDepth};
use camflow::io::read_flo;
use serde::{Deserialize, Serialize};

use crate::config;
use crate::errors::CliError;
use crate::manifest::RunRecorder;

#[derive(clap::Args)]
pub struct Args {
    /// Predicted flow (.flo).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth flow (.flo).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Optional validity mask (PGM).
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Optional point pairs (JSON with src/dst arrays) for PME.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// First image of the pair (PGM) for photometric metrics.
    #[arg(long)]
    image_a: Option<PathBuf>,
    /// Second image of the pair (PGM) for photometric metrics.
    #[arg(long)]
    image_b: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    pred: Option<PathBuf>,
    gt: Option<PathBuf>,
    valid: Option<PathBuf>,
    pairs: Option<PathBuf>,
    image_a: Option<PathBuf>,
    image_b: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    pred: PathBuf,
    gt: PathBuf,
    valid: Option<PathBuf>,
    pairs: Option<PathBuf>,
    image_a: Option<PathBuf>,
    image_b: Option<PathBuf>,
    out: PathBuf,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let body = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&body)
        .map_err(|e| CliError::data(format!("malformed json {}: {e}", path.display())))
}

pub fn run(args: Args) -> Result<(), CliError> {
    let file: FileConfig = config::load(args.config.as_deref())?;
    let resolved = Resolved {
        pred: args
            .pred
            .or(file.pred)
            .ok_or_else(|| CliError::usage("missing --pred flow"))?,
        gt: args
            .gt
            .or(file.gt)
            .ok_or_else(|| CliError::usage("missing --gt flow"))?,
        valid: args.valid.or(file.valid),
        pairs: args.pairs.or(file.pairs),
        image_a: args.image_a.or(file.image_a),
        image_b: args.image_b.or(file.image_b),
        out: args
            .out
            .or(file.out)
            .ok_or_else(|| CliError::usage("missing --out directory"))?,
    };
    if resolved.image_a.is_some() != resolved.image_b.is_some() {
        return Err(CliError::usage(
            "photometric metrics need both --image-a and --image-b",
        ));
    }

    let mut recorder = RunRecorder::new("eval");
    let pred = read_flo(&resolved.pred)?;
    let gt = read_flo(&resolved.gt)?;
    recorder.input(&resolved.pred)?;
    recorder.input(&resolved.gt)?;
    let grid = pred.grid();
    if gt.grid() != grid {
        return Err(CliError::data(format!(
            "grid mismatch: prediction is {}x{}, ground truth is {}x{}",
            grid.height,
            grid.width,
            gt.grid().height,
            gt.grid().width
        )));
    }

    let valid = match &resolved.valid {
        None => None,
        Some(path) => {
            let mask = read_mask_pgm(path)?;
            recorder.input(path)?;
            Some(mask)
        }
    };

    let mut metrics: Vec<MetricReport> = vec![epe(&pred, &gt, valid.as_ref())?];

    if let Some(path) = &resolved.pairs {
        let pairs: PointPairs = read_json(path)?;
        recorder.input(path)?;
        metrics.push(pme(Motion::Flow(&pred), &pairs, grid)?);
    }

    if let (Some(a_path), Some(b_path)) = (&resolved.image_a, &resolved.image_b) {
        let i_a = read_pgm(a_path)?;
        let i_b = read_pgm(b_path)?;
        recorder.input(a_path)?;
        recorder.input(b_path)?;
        let (warped, warp_valid) = warp_backward(&i_b, &pred)?;
        let photometric_valid = match &valid {
            None => warp_valid,
            Some(v) => v.intersect(&warp_valid)?,
        };
        metrics.push(psnr(&i_a, &warped, Some(&photometric_valid))?);
        metrics.push(ssim(&i_a, &warped, Some(&photometric_valid))?);
    }

    fs::create_dir_all(&resolved.out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", resolved.out.display())))?;

    let metrics_path = resolved.out.join("metrics.json");
    let mut body = serde_json::to_string_pretty(&metrics)
        .map_err(|e| CliError::data(format!("cannot encode metrics: {e}")))?;
    body.push('\n');
    fs::write(&metrics_path, body)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", metrics_path.display())))?;

    let heatmap_path = resolved.out.join("error_heatmap.pgm");
    write_pgm(
        &error_heatmap(&pred, &gt, valid.as_ref())?,
        &heatmap_path,
        PgmDepth::Eight,
    )?;

    recorder.output(&metrics_path);
    recorder.output(&heatmap_path);
    recorder.finish(&resolved, &resolved.out)?;
    for m in &metrics {
        println!(
            "{}: {:.6} ({} samples, coverage {:.3})",
            m.name, m.value, m.count, m.coverage
        );
    }
    Ok(())
}

/// Per-pixel end-point error in pixels, normalized by the maximum over
/// the valid set; invalid pixels render black.
fn error_heatmap(
    pred: &camflow::geometry::FlowField,
    gt: &camflow::geometry::FlowField,
    valid: Option<&Mask>,
) -> Result<ImageGray, CliError> {
    let grid = pred.grid();
    let sx = grid.px_scale_x();
    let sy = grid.px_scale_y();
    let mut err = vec![0.0f64; grid.len()];
    let mut max = 0.0f64;
    for i in 0..grid.len() {
        let usable = valid.map_or(true, |m| m.data()[i]);
        if usable {
            let du = (pred.u()[i] - gt.u()[i]) * sx;
            let dv = (pred.v()[i] - gt.v()[i]) * sy;
            err[i] = (du * du + dv * dv).sqrt();
            max = max.max(err[i]);
        }
    }
    let data = err
        .iter()
        .map(|&e| if max > 0.0 { e / max } else { 0.0 })
        .collect();
    ImageGray::new(grid.height, grid.width, data).map_err(CliError::from)
}
