//! `camflow fit`: robust basis-weight fit of a bundle to a target flow.
//!
//! Outputs beside the run manifest: `weights.json`, `report.json`,
//! `fitted_flow.flo`, and `sigma.pgm` — the per-pixel confidence scale on
//! a log ramp between the configured clamps (dark = confident).

use std::fs;
use std::path::{Path, PathBuf};

use camflow::basis::load_bundle;
use camflow::imaging::{read_mask_pgm, write_pgm, ImageGray, PgmDepth};
use camflow::io::{read_flo, write_flo};
use camflow::robustfit::{fit_weights_laplace, synthesize_flow, ConfidenceMask, FitConfig};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::errors::CliError;
use crate::manifest::RunRecorder;

#[derive(clap::Args)]
pub struct Args {
    /// Basis bundle directory (from gen-bases).
    #[arg(long)]
    bases: Option<PathBuf>,
    /// Target flow file (.flo).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Optional validity mask (PGM, 0 = ignore the pixel).
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// IRLS iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative NLL convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Residual floor in the IRLS weights.
    #[arg(long)]
    irls_delta: Option<f64>,
    /// Lower clamp of the confidence scale.
    #[arg(long)]
    sigma_min: Option<f64>,
    /// Upper clamp of the confidence scale.
    #[arg(long)]
    sigma_max: Option<f64>,
    /// Weight of the photometric term in the hybrid loss.
    #[arg(long)]
    balance_weight: Option<f64>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    bases: Option<PathBuf>,
    flow: Option<PathBuf>,
    valid: Option<PathBuf>,
    out: Option<PathBuf>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    irls_delta: Option<f64>,
    sigma_min: Option<f64>,
    sigma_max: Option<f64>,
    balance_weight: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    bases: PathBuf,
    flow: PathBuf,
    valid: Option<PathBuf>,
    out: PathBuf,
    fit: FitConfig,
}

/// Confidence scales on a log ramp between the clamps, as an 8-bit image.
fn sigma_image(sigma: &ConfidenceMask, cfg: &FitConfig) -> Result<ImageGray, CliError> {
    let grid = sigma.grid();
    let lo = cfg.sigma_min.ln();
    let span = cfg.sigma_max.ln() - lo;
    let data = sigma
        .sigma()
        .iter()
        .map(|&s| {
            if span <= 0.0 {
                0.0
            } else {
                ((s.ln() - lo) / span).clamp(0.0, 1.0)
            }
        })
        .collect();
    ImageGray::new(grid.height, grid.width, data).map_err(CliError::from)
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
    let defaults = FitConfig::default();
    let resolved = Resolved {
        bases: args
            .bases
            .or(file.bases)
            .ok_or_else(|| CliError::usage("missing --bases bundle directory"))?,
        flow: args
            .flow
            .or(file.flow)
            .ok_or_else(|| CliError::usage("missing --flow target file"))?,
        valid: args.valid.or(file.valid),
        out: args
            .out
            .or(file.out)
            .ok_or_else(|| CliError::usage("missing --out directory"))?,
        fit: FitConfig {
            max_iters: args.max_iters.or(file.max_iters).unwrap_or(defaults.max_iters),
            tol: args.tol.or(file.tol).unwrap_or(defaults.tol),
            irls_delta: args
                .irls_delta
                .or(file.irls_delta)
                .unwrap_or(defaults.irls_delta),
            sigma_min: args.sigma_min.or(file.sigma_min).unwrap_or(defaults.sigma_min),
            sigma_max: args.sigma_max.or(file.sigma_max).unwrap_or(defaults.sigma_max),
            balance_weight: args
                .balance_weight
                .or(file.balance_weight)
                .unwrap_or(defaults.balance_weight),
        },
    };

    let mut recorder = RunRecorder::new("fit");
    let set = load_bundle(&resolved.bases)?;
    let target = read_flo(&resolved.flow)?;
    recorder.input(&resolved.flow)?;
    recorder.input(&resolved.bases.join("manifest.json"))?;

    let set_grid = set.grid();
    let target_grid = target.grid();
    if set_grid != target_grid {
        return Err(CliError::data(format!(
            "grid mismatch: bundle is {}x{}, flow is {}x{}",
            set_grid.height, set_grid.width, target_grid.height, target_grid.width
        )));
    }

    let valid = match &resolved.valid {
        None => None,
        Some(path) => {
            let mask = read_mask_pgm(path)?;
            recorder.input(path)?;
            if (mask.height(), mask.width()) != (set_grid.height, set_grid.width) {
                return Err(CliError::data(format!(
                    "grid mismatch: mask is {}x{}, flow is {}x{}",
                    mask.height(),
                    mask.width(),
                    set_grid.height,
                    set_grid.width
                )));
            }
            Some(mask)
        }
    };

    let (weights, sigma, report) =
        fit_weights_laplace(&set, &target, &resolved.fit, valid.as_ref())?;
    let fitted = synthesize_flow(&set, &weights)?;

    fs::create_dir_all(&resolved.out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", resolved.out.display())))?;
    let weights_path = resolved.out.join("weights.json");
    let report_path = resolved.out.join("report.json");
    let flow_path = resolved.out.join("fitted_flow.flo");
    let sigma_path = resolved.out.join("sigma.pgm");

    write_json(&weights, &weights_path)?;
    write_json(&report, &report_path)?;
    write_flo(&fitted, &flow_path)?;
    write_pgm(&sigma_image(&sigma, &resolved.fit)?, &sigma_path, PgmDepth::Eight)?;

    for p in [&weights_path, &report_path, &flow_path, &sigma_path] {
        recorder.output(p);
    }
    recorder.finish(&resolved, &resolved.out)?;
    println!(
        "fit {} bases in {} iterations (converged: {}, residual {:.3e})",
        set.n(),
        report.iterations,
        report.converged,
        report.residual
    );
    Ok(())
}
