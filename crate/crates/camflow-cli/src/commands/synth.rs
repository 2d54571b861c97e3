//! `camflow synth`: generate synthetic scenes.
//!
//! Two modes: `--spec scene.json` builds and renders a single scene into
//! `--out`; `--count N --master-seed S` generates a deterministic suite
//! of scenes into `scene_000/ … scene_{N-1}/` plus a `suite_manifest.json`
//! recording the swept parameter ranges and per-scene summaries.

use std::fs;
use std::path::{Path, PathBuf};

use camflow::synth::{
    benchmark_suite_on_grid, build_scene, render_pair, save_scene, SceneSample, SceneSpec,
    DEFAULT_SCENE_HEIGHT, DEFAULT_SCENE_WIDTH, SUITE_ROTATION_MAGS, SUITE_TRANSLATION_MAGS,
};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::errors::CliError;
use crate::manifest::RunRecorder;

#[derive(clap::Args)]
pub struct Args {
    /// Scene spec JSON for single-scene mode.
    #[arg(long, conflicts_with_all = ["count", "master_seed"])]
    spec: Option<PathBuf>,
    /// Number of scenes for suite mode.
    #[arg(long)]
    count: Option<usize>,
    /// Master seed for suite mode.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Suite raster height.
    #[arg(long)]
    height: Option<usize>,
    /// Suite raster width.
    #[arg(long)]
    width: Option<usize>,
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
    spec: Option<PathBuf>,
    count: Option<usize>,
    master_seed: Option<u64>,
    height: Option<usize>,
    width: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    spec: Option<PathBuf>,
    count: Option<usize>,
    master_seed: Option<u64>,
    height: usize,
    width: usize,
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct SceneSummary {
    dir: String,
    seed: u64,
    planes: usize,
    dynamic_objects: usize,
    valid_coverage: f64,
}

#[derive(Debug, Serialize)]
struct SuiteManifest {
    count: usize,
    master_seed: u64,
    height: usize,
    width: usize,
    rotation_magnitudes: [f64; 3],
    translation_magnitudes: [f64; 3],
    scenes: Vec<SceneSummary>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(format!("cannot encode {}: {e}", path.display())))?;
    body.push('\n');
    fs::write(path, body)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn summarize(sample: &SceneSample, dir: &str) -> SceneSummary {
    SceneSummary {
        dir: dir.to_string(),
        seed: sample.spec.texture_seed,
        planes: sample.spec.planes.len(),
        dynamic_objects: sample.spec.dynamic_objects.len(),
        valid_coverage: sample.valid.coverage(),
    }
}

pub fn run(args: Args) -> Result<(), CliError> {
    let file: FileConfig = config::load(args.config.as_deref())?;
    let spec_path = args.spec.or(file.spec);
    let count = args.count.or(file.count);
    let resolved = Resolved {
        spec: spec_path.clone(),
        count,
        master_seed: args.master_seed.or(file.master_seed),
        height: args.height.or(file.height).unwrap_or(DEFAULT_SCENE_HEIGHT),
        width: args.width.or(file.width).unwrap_or(DEFAULT_SCENE_WIDTH),
        out: args
            .out
            .or(file.out)
            .ok_or_else(|| CliError::usage("missing --out directory"))?,
    };

    match (&spec_path, count) {
        (Some(_), Some(_)) => Err(CliError::usage(
            "--spec and --count are mutually exclusive",
        )),
        (None, None) => Err(CliError::usage(
            "pick a mode: --spec scene.json or --count N",
        )),
        (Some(path), None) => run_single(path, &resolved),
        (None, Some(n)) => run_suite(n, &resolved),
    }
}

fn run_single(spec_path: &Path, resolved: &Resolved) -> Result<(), CliError> {
    let mut recorder = RunRecorder::new("synth");
    let body = fs::read_to_string(spec_path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec: SceneSpec = serde_json::from_str(&body)
        .map_err(|e| CliError::data(format!("malformed scene spec {}: {e}", spec_path.display())))?;
    recorder.input(spec_path)?;

    let mut sample = build_scene(&spec)?;
    render_pair(&mut sample, spec.texture_seed)?;
    save_scene(&sample, &resolved.out)?;

    recorder.output_tree(&resolved.out)?;
    recorder.finish(resolved, &resolved.out)?;
    println!(
        "scene with {} planes written to {} (valid coverage {:.3})",
        spec.planes.len(),
        resolved.out.display(),
        sample.valid.coverage()
    );
    Ok(())
}

fn run_suite(count: usize, resolved: &Resolved) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let master_seed = resolved.master_seed.unwrap_or(0);
    let mut recorder = RunRecorder::new("synth");

    let samples = benchmark_suite_on_grid(count, master_seed, resolved.height, resolved.width)?;
    fs::create_dir_all(&resolved.out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", resolved.out.display())))?;

    let mut scenes = Vec::with_capacity(count);
    for (i, sample) in samples.iter().enumerate() {
        let name = format!("scene_{i:03}");
        save_scene(sample, &resolved.out.join(&name))?;
        scenes.push(summarize(sample, &name));
    }

    let manifest = SuiteManifest {
        count,
        master_seed,
        height: resolved.height,
        width: resolved.width,
        rotation_magnitudes: SUITE_ROTATION_MAGS,
        translation_magnitudes: SUITE_TRANSLATION_MAGS,
        scenes,
    };
    write_json(&manifest, &resolved.out.join("suite_manifest.json"))?;

    recorder.output_tree(&resolved.out)?;
    recorder.finish(resolved, &resolved.out)?;
    println!(
        "suite of {count} scenes (master seed {master_seed}) written to {}",
        resolved.out.display()
    );
    Ok(())
}
