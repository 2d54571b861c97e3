//! Synthetic multi-plane camera-motion scenes with exact ground truth.
//!
//! A scene is a camera pose shared by several world planes, each owning a
//! region of the image. Every region moves under its own plane-induced
//! homography, so the composite flow is piecewise-projective — smooth
//! within a plane, discontinuous across plane boundaries — which is
//! exactly the regime where a single global homography fails. Dynamic
//! objects are stamped on top as constant-offset regions and masked out
//! of the camera-motion ground truth. Image pairs are rendered from
//! seeded value-noise textures by backward warping, so photometric
//! metrics have real gradients to work with while the geometric ground
//! truth stays exact.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    flow_from_homography, homography_from_pose, CameraPose, FlowField, GeometryError, Homography,
    PixelGrid,
};
use crate::imaging::{valid_region, warp_backward, ImageGray, ImagingError, Mask};
use crate::io::FloError;

/// Default scene raster, matching the default basis grid.
pub const DEFAULT_SCENE_HEIGHT: usize = crate::basis::DEFAULT_GRID_HEIGHT;
pub const DEFAULT_SCENE_WIDTH: usize = crate::basis::DEFAULT_GRID_WIDTH;

/// Rotation magnitudes (radians) swept by the benchmark suite.
pub const SUITE_ROTATION_MAGS: [f64; 3] = [0.002, 0.005, 0.01];
/// Translation magnitudes (normalized units) swept by the benchmark suite.
pub const SUITE_TRANSLATION_MAGS: [f64; 3] = [0.01, 0.02, 0.04];

const TEXTURE_OCTAVES: u32 = 4;
const TEXTURE_BASE_CELLS: f64 = 4.0;

/// Errors from scene construction, rendering, or persistence.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Flo(#[from] FloError),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("pixel ({row}, {col}) belongs to planes {first} and {second}")]
    PartitionOverlap {
        row: usize,
        col: usize,
        first: usize,
        second: usize,
    },
    #[error("pixel ({row}, {col}) belongs to no plane")]
    PartitionGap { row: usize, col: usize },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {detail}")]
    Json { path: String, detail: String },
    #[error("scene directory is inconsistent: {0}")]
    Inconsistent(String),
}

impl SynthError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        SynthError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn json(path: &Path, detail: impl ToString) -> Self {
        SynthError::Json {
            path: path.display().to_string(),
            detail: detail.to_string(),
        }
    }
}

/// Axis-aligned rectangle in normalized coordinates, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x_min <= x && x <= self.x_max && self.y_min <= y && y <= self.y_max
    }

    fn validate(&self) -> Result<(), SynthError> {
        let vals = [self.x_min, self.x_max, self.y_min, self.y_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::InvalidSpec("rectangle bound is not finite".into()));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(SynthError::InvalidSpec(format!(
                "rectangle bounds are inverted: x [{}, {}], y [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.x_max < -1.0 || self.x_min > 1.0 || self.y_max < -1.0 || self.y_min > 1.0 {
            return Err(SynthError::InvalidSpec(
                "rectangle lies entirely outside the normalized square".into(),
            ));
        }
        Ok(())
    }
}

/// An image region in normalized coordinates.
///
/// Rectangles use inclusive bounds. Half-planes keep all points with
/// `a·x + b·y ≥ c` (or strictly `>` when `inclusive` is false), so the
/// exact complement of `{a, b, c, inclusive: true}` is
/// `{-a, -b, -c, inclusive: false}` — partitions built from such pairs
/// have no gaps or double assignments for any pixel, including pixels
/// exactly on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Rect(Rect),
    HalfPlane { a: f64, b: f64, c: f64, inclusive: bool },
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Rect(r) => r.contains(x, y),
            Region::HalfPlane { a, b, c, inclusive } => {
                let s = a * x + b * y;
                if inclusive {
                    s >= c
                } else {
                    s > c
                }
            }
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        match *self {
            Region::Rect(r) => r.validate(),
            Region::HalfPlane { a, b, c, .. } => {
                if ![a, b, c].iter().all(|v| v.is_finite()) {
                    return Err(SynthError::InvalidSpec("half-plane coefficient is not finite".into()));
                }
                if a == 0.0 && b == 0.0 {
                    return Err(SynthError::InvalidSpec(
                        "half-plane normal (a, b) must be nonzero".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Pinhole camera and relative pose between the two views.
///
/// `rotation` holds Euler angles `[rx, ry, rz]` in radians, composed as
/// `R = Rz(rz)·Ry(ry)·Rx(rx)`. Focal lengths and the principal point are
/// expressed in normalized image units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl CameraParams {
    pub fn k_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let [rx, ry, rz] = self.rotation;
        *Rotation3::from_euler_angles(rx, ry, rz).matrix()
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::new(self.translation[0], self.translation[1], self.translation[2])
    }
}

/// One world plane: unit normal, positive distance from the first camera
/// center, and the image region it owns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub n: [f64; 3],
    pub d: f64,
    pub region: Region,
}

/// A constant-offset region excluded from the camera-motion ground truth.
/// `motion` is in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicObject {
    pub region: Rect,
    pub motion: [f64; 2],
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub camera: CameraParams,
    pub planes: Vec<PlaneSpec>,
    #[serde(default)]
    pub dynamic_objects: Vec<DynamicObject>,
    pub texture_seed: u64,
}

impl SceneSpec {
    fn validate(&self) -> Result<PixelGrid, SynthError> {
        let grid = PixelGrid::new(self.height, self.width)?;
        if self.planes.is_empty() {
            return Err(SynthError::InvalidSpec("scene needs at least one plane".into()));
        }
        if self.planes.len() > u8::MAX as usize {
            return Err(SynthError::InvalidSpec(format!(
                "{} planes exceed the 255-plane id range",
                self.planes.len()
            )));
        }
        for (k, plane) in self.planes.iter().enumerate() {
            plane.region.validate()?;
            if !(plane.d.is_finite() && plane.d > 0.0) {
                return Err(SynthError::InvalidSpec(format!(
                    "plane {k} has non-positive distance {}",
                    plane.d
                )));
            }
            let norm = (plane.n[0].powi(2) + plane.n[1].powi(2) + plane.n[2].powi(2)).sqrt();
            if !norm.is_finite() || norm < 1e-12 {
                return Err(SynthError::InvalidSpec(format!("plane {k} has a zero normal")));
            }
        }
        for obj in &self.dynamic_objects {
            obj.region.validate()?;
            if !(obj.motion[0].is_finite() && obj.motion[1].is_finite()) {
                return Err(SynthError::InvalidSpec("dynamic object motion is not finite".into()));
            }
        }
        Ok(grid)
    }
}

/// A realized scene: ground-truth flow, validity, per-pixel plane ids,
/// per-plane homographies, and (after rendering) the image pair.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub spec: SceneSpec,
    pub gt_flow: FlowField,
    pub valid: Mask,
    pub plane_ids: Vec<u8>,
    pub homographies: Vec<Homography>,
    pub images: Option<(ImageGray, ImageGray)>,
}

/// Builds the ground truth for a scene.
///
/// Each plane's homography comes from the shared pose and its own (n, d);
/// every pixel copies the flow of the plane that owns it, so per-plane
/// flow values are bit-exact. Dynamic objects then overwrite their region
/// with a constant offset and mark it invalid; finally pixels whose
/// motion leaves the frame are marked invalid too.
pub fn build_scene(spec: &SceneSpec) -> Result<SceneSample, SynthError> {
    let grid = spec.validate()?;
    let k = spec.camera.k_matrix();
    let r = spec.camera.rotation_matrix();
    let t = spec.camera.translation_vector();

    let mut homographies = Vec::with_capacity(spec.planes.len());
    let mut plane_flows = Vec::with_capacity(spec.planes.len());
    for plane in &spec.planes {
        let n = Vector3::new(plane.n[0], plane.n[1], plane.n[2]).normalize();
        let pose = CameraPose::new(k, r, t, n, plane.d)?;
        let h = homography_from_pose(&pose)?;
        plane_flows.push(flow_from_homography(&h, grid)?);
        homographies.push(h);
    }

    let mut u = vec![0.0; grid.len()];
    let mut v = vec![0.0; grid.len()];
    let mut plane_ids = vec![0u8; grid.len()];
    for (row, col, x, y) in grid.iter_coords() {
        let mut owner: Option<usize> = None;
        for (kth, plane) in spec.planes.iter().enumerate() {
            if plane.region.contains(x, y) {
                if let Some(first) = owner {
                    return Err(SynthError::PartitionOverlap {
                        row,
                        col,
                        first,
                        second: kth,
                    });
                }
                owner = Some(kth);
            }
        }
        let kth = owner.ok_or(SynthError::PartitionGap { row, col })?;
        let i = grid.index(row, col);
        u[i] = plane_flows[kth].u()[i];
        v[i] = plane_flows[kth].v()[i];
        plane_ids[i] = kth as u8;
    }

    let mut dynamic = vec![false; grid.len()];
    for obj in &spec.dynamic_objects {
        for (row, col, x, y) in grid.iter_coords() {
            if obj.region.contains(x, y) {
                let i = grid.index(row, col);
                u[i] = obj.motion[0];
                v[i] = obj.motion[1];
                dynamic[i] = true;
            }
        }
    }

    let gt_flow = FlowField::new(grid, u, v)?;
    let in_view = valid_region(&gt_flow, grid.height, grid.width);
    let valid_data = in_view
        .data()
        .iter()
        .zip(&dynamic)
        .map(|(&in_v, &dyn_px)| in_v && !dyn_px)
        .collect();
    let valid = Mask::new(grid.height, grid.width, valid_data)?;

    Ok(SceneSample {
        spec: spec.clone(),
        gt_flow,
        valid,
        plane_ids,
        homographies,
        images: None,
    })
}

/// splitmix64 finalizer: the 64-bit mixing function used for child seeds
/// and texture lattice hashing.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for sample `index`: `mix64(master ^ mix64(index))`.
pub fn child_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ mix64(index))
}

fn lattice_value(seed: u64, octave: u32, i: i64, j: i64) -> f64 {
    let h = mix64(mix64(mix64(seed ^ u64::from(octave)) ^ i as u64) ^ j as u64);
    // Top 53 bits to a uniform double in [0, 1).
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Seeded band-limited value noise, contrast-normalized to span [0, 1].
fn texture(height: usize, width: usize, seed: u64) -> Result<ImageGray, ImagingError> {
    let longest = height.max(width) as f64;
    let mut acc = vec![0.0f64; height * width];
    let mut amplitude = 1.0;
    let mut cells = TEXTURE_BASE_CELLS;
    for octave in 0..TEXTURE_OCTAVES {
        let scale = cells / longest;
        for row in 0..height {
            let fy = row as f64 * scale;
            let j0 = fy.floor() as i64;
            let ty = smoothstep(fy - fy.floor());
            for col in 0..width {
                let fx = col as f64 * scale;
                let i0 = fx.floor() as i64;
                let tx = smoothstep(fx - fx.floor());
                let v00 = lattice_value(seed, octave, i0, j0);
                let v10 = lattice_value(seed, octave, i0 + 1, j0);
                let v01 = lattice_value(seed, octave, i0, j0 + 1);
                let v11 = lattice_value(seed, octave, i0 + 1, j0 + 1);
                let top = v00 + tx * (v10 - v00);
                let bot = v01 + tx * (v11 - v01);
                acc[row * width + col] += amplitude * (top + ty * (bot - top));
            }
        }
        amplitude *= 0.5;
        cells *= 2.0;
    }
    let min = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let data = if span < 1e-12 {
        vec![0.5; height * width]
    } else {
        acc.iter().map(|&v| (v - min) / span).collect()
    };
    ImageGray::new(height, width, data)
}

/// Renders the image pair for a scene: the second frame is a seeded
/// noise texture and the first is its backward warp through the
/// ground-truth flow. The warp's validity is folded into `sample.valid`,
/// the pair is stored on the sample, and a copy is returned.
pub fn render_pair(
    sample: &mut SceneSample,
    texture_seed: u64,
) -> Result<(ImageGray, ImageGray), SynthError> {
    let grid = sample.gt_flow.grid();
    let i_b = texture(grid.height, grid.width, texture_seed)?;
    let (i_a, warp_valid) = warp_backward(&i_b, &sample.gt_flow)?;
    sample.valid = sample.valid.intersect(&warp_valid)?;
    sample.images = Some((i_a.clone(), i_b.clone()));
    Ok((i_a, i_b))
}

fn orientation(theta: f64) -> (f64, f64) {
    (theta.cos(), theta.sin())
}

/// Deterministic benchmark suite on the default raster.
///
/// Sample `i` cycles plane count 1→2→3, steps the rotation magnitude
/// through [`SUITE_ROTATION_MAGS`] every 3 samples and the translation
/// magnitude through [`SUITE_TRANSLATION_MAGS`] every 9, and stamps a
/// dynamic object on every fourth sample. Single-plane scenes restrict
/// the pose to in-plane rotation with a frontoparallel plane, which makes
/// their flow exactly affine; multi-plane scenes use general small
/// rotations and tilted planes at distinct depths. Child seeds follow
/// [`child_seed`].
pub fn benchmark_suite(count: usize, master_seed: u64) -> Result<Vec<SceneSample>, SynthError> {
    benchmark_suite_on_grid(count, master_seed, DEFAULT_SCENE_HEIGHT, DEFAULT_SCENE_WIDTH)
}

/// [`benchmark_suite`] on a caller-chosen raster.
pub fn benchmark_suite_on_grid(
    count: usize,
    master_seed: u64,
    height: usize,
    width: usize,
) -> Result<Vec<SceneSample>, SynthError> {
    use rand::Rng;
    use rand::SeedableRng;

    if count == 0 {
        return Err(SynthError::InvalidSpec("suite needs count >= 1".into()));
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let seed = child_seed(master_seed, i as u64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let plane_count = i % 3 + 1;
        let rot_mag = SUITE_ROTATION_MAGS[(i / 3) % 3];
        let trans_mag = SUITE_TRANSLATION_MAGS[(i / 9) % 3];
        let with_dynamic = i % 4 == 3;

        let f = rng.random_range(0.9..1.2);
        let camera = if plane_count == 1 {
            // In-plane rotation only: with a frontoparallel plane the
            // homography is affine, so the flow lies in the span of the
            // physical bases and fits are exact.
            let theta = rot_mag * rng.random_range(0.5..1.0) * pick_sign(&mut rng);
            CameraParams {
                fx: f,
                fy: f,
                cx: 0.0,
                cy: 0.0,
                rotation: [0.0, 0.0, theta],
                translation: [
                    trans_mag * rng.random_range(-1.0..1.0),
                    trans_mag * rng.random_range(-1.0..1.0),
                    0.3 * trans_mag * rng.random_range(-1.0..1.0),
                ],
            }
        } else {
            CameraParams {
                fx: f,
                fy: f,
                cx: 0.0,
                cy: 0.0,
                rotation: [
                    rot_mag * rng.random_range(-1.0..1.0),
                    rot_mag * rng.random_range(-1.0..1.0),
                    rot_mag * rng.random_range(-1.0..1.0),
                ],
                translation: [
                    trans_mag * rng.random_range(-1.0..1.0),
                    trans_mag * rng.random_range(-1.0..1.0),
                    0.3 * trans_mag * rng.random_range(-1.0..1.0),
                ],
            }
        };

        let planes = match plane_count {
            1 => vec![PlaneSpec {
                n: [0.0, 0.0, 1.0],
                d: rng.random_range(1.0..2.0),
                region: Region::HalfPlane {
                    a: 1.0,
                    b: 0.0,
                    c: -2.0,
                    inclusive: true,
                },
            }],
            2 => {
                // A split line through the image at a random orientation;
                // the second region is the exact complement of the first.
                let (a, b) = orientation(rng.random_range(0.0..std::f64::consts::PI));
                let c = rng.random_range(-0.3..0.3);
                vec![
                    PlaneSpec {
                        n: tilted_normal(&mut rng),
                        d: rng.random_range(0.9..1.2),
                        region: Region::HalfPlane {
                            a,
                            b,
                            c,
                            inclusive: true,
                        },
                    },
                    PlaneSpec {
                        n: tilted_normal(&mut rng),
                        d: rng.random_range(1.8..2.6),
                        region: Region::HalfPlane {
                            a: -a,
                            b: -b,
                            c: -c,
                            inclusive: false,
                        },
                    },
                ]
            }
            _ => {
                // Three vertical or horizontal strips. The middle strip is
                // an inclusive rectangle; its neighbors are strict
                // half-planes, so boundary pixels land in exactly one
                // region.
                let vertical = rng.random_range(0.0..1.0) < 0.5;
                let s1 = rng.random_range(-0.5..-0.15);
                let s2 = rng.random_range(0.15..0.5);
                let (low, mid, high) = strip_regions(vertical, s1, s2);
                vec![
                    PlaneSpec {
                        n: tilted_normal(&mut rng),
                        d: rng.random_range(0.9..1.1),
                        region: low,
                    },
                    PlaneSpec {
                        n: tilted_normal(&mut rng),
                        d: rng.random_range(1.4..1.7),
                        region: mid,
                    },
                    PlaneSpec {
                        n: tilted_normal(&mut rng),
                        d: rng.random_range(2.2..2.6),
                        region: high,
                    },
                ]
            }
        };

        let dynamic_objects = if with_dynamic {
            let cx = rng.random_range(-0.5..0.5);
            let cy = rng.random_range(-0.5..0.5);
            let hx = rng.random_range(0.1..0.2);
            let hy = rng.random_range(0.1..0.2);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let mag = rng.random_range(0.05..0.1);
            vec![DynamicObject {
                region: Rect {
                    x_min: cx - hx,
                    x_max: cx + hx,
                    y_min: cy - hy,
                    y_max: cy + hy,
                },
                motion: [mag * angle.cos(), mag * angle.sin()],
            }]
        } else {
            Vec::new()
        };

        let spec = SceneSpec {
            height,
            width,
            camera,
            planes,
            dynamic_objects,
            texture_seed: seed,
        };
        let mut sample = build_scene(&spec)?;
        render_pair(&mut sample, seed)?;
        samples.push(sample);
    }
    Ok(samples)
}

fn pick_sign(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    if rng.random_range(0.0..1.0) < 0.5 {
        -1.0
    } else {
        1.0
    }
}

fn tilted_normal(rng: &mut rand_chacha::ChaCha8Rng) -> [f64; 3] {
    use rand::Rng;
    let nx: f64 = rng.random_range(-0.3..0.3);
    let ny: f64 = rng.random_range(-0.3..0.3);
    let len = (nx * nx + ny * ny + 1.0).sqrt();
    [nx / len, ny / len, 1.0 / len]
}

fn strip_regions(vertical: bool, s1: f64, s2: f64) -> (Region, Region, Region) {
    let (a, b) = if vertical { (1.0, 0.0) } else { (0.0, 1.0) };
    let low = Region::HalfPlane {
        a: -a,
        b: -b,
        c: -s1,
        inclusive: false,
    };
    let mid = if vertical {
        Region::Rect(Rect {
            x_min: s1,
            x_max: s2,
            y_min: -1.0,
            y_max: 1.0,
        })
    } else {
        Region::Rect(Rect {
            x_min: -1.0,
            x_max: 1.0,
            y_min: s1,
            y_max: s2,
        })
    };
    let high = Region::HalfPlane {
        a,
        b,
        c: s2,
        inclusive: false,
    };
    (low, mid, high)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), SynthError> {
    let mut body =
        serde_json::to_string_pretty(value).map_err(|e| SynthError::json(path, e))?;
    body.push('\n');
    fs::write(path, body).map_err(|e| SynthError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SynthError> {
    let body = fs::read_to_string(path).map_err(|e| SynthError::io(path, e))?;
    serde_json::from_str(&body).map_err(|e| SynthError::json(path, e))
}

/// Persists a scene as a directory:
/// `spec.json`, `gt_flow.flo`, `valid.pgm`, `plane_ids.pgm`,
/// `homographies.json`, and — when rendered — `i_a.pgm` / `i_b.pgm`
/// (16-bit).
pub fn save_scene(sample: &SceneSample, dir: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(|e| SynthError::io(dir, e))?;
    write_json(&sample.spec, &dir.join("spec.json"))?;
    crate::io::write_flo(&sample.gt_flow, &dir.join("gt_flow.flo"))?;
    crate::imaging::write_mask_pgm(&sample.valid, &dir.join("valid.pgm"))?;
    let grid = sample.gt_flow.grid();
    crate::imaging::write_indexed_pgm(
        &sample.plane_ids,
        grid.height,
        grid.width,
        &dir.join("plane_ids.pgm"),
    )?;
    write_json(&sample.homographies, &dir.join("homographies.json"))?;
    if let Some((i_a, i_b)) = &sample.images {
        crate::imaging::write_pgm(i_a, &dir.join("i_a.pgm"), crate::imaging::PgmDepth::Sixteen)?;
        crate::imaging::write_pgm(i_b, &dir.join("i_b.pgm"), crate::imaging::PgmDepth::Sixteen)?;
    }
    Ok(())
}

/// Loads a scene directory written by [`save_scene`]. Flow and image
/// values round through their file precision; masks, plane ids, the spec,
/// and the homographies load exactly.
pub fn load_scene(dir: &Path) -> Result<SceneSample, SynthError> {
    let spec: SceneSpec = read_json(&dir.join("spec.json"))?;
    let gt_flow = crate::io::read_flo(&dir.join("gt_flow.flo"))?;
    let valid = crate::imaging::read_mask_pgm(&dir.join("valid.pgm"))?;
    let (plane_ids, ph, pw) = crate::imaging::read_indexed_pgm(&dir.join("plane_ids.pgm"))?;
    let homographies: Vec<Homography> = read_json(&dir.join("homographies.json"))?;

    let grid = gt_flow.grid();
    if (spec.height, spec.width) != (grid.height, grid.width) {
        return Err(SynthError::Inconsistent(format!(
            "spec raster {}x{} does not match flow raster {}x{}",
            spec.height, spec.width, grid.height, grid.width
        )));
    }
    if (valid.height(), valid.width()) != (grid.height, grid.width)
        || (ph, pw) != (grid.height, grid.width)
    {
        return Err(SynthError::Inconsistent(
            "mask or plane-id raster does not match the flow raster".into(),
        ));
    }
    if homographies.len() != spec.planes.len() {
        return Err(SynthError::Inconsistent(format!(
            "{} homographies for {} planes",
            homographies.len(),
            spec.planes.len()
        )));
    }
    if let Some(&bad) = plane_ids.iter().find(|&&id| id as usize >= spec.planes.len()) {
        return Err(SynthError::Inconsistent(format!(
            "plane id {bad} out of range for {} planes",
            spec.planes.len()
        )));
    }

    let a_path = dir.join("i_a.pgm");
    let b_path = dir.join("i_b.pgm");
    let images = if a_path.exists() && b_path.exists() {
        let i_a = crate::imaging::read_pgm(&a_path)?;
        let i_b = crate::imaging::read_pgm(&b_path)?;
        if (i_a.height(), i_a.width()) != (grid.height, grid.width)
            || (i_b.height(), i_b.width()) != (grid.height, grid.width)
        {
            return Err(SynthError::Inconsistent(
                "image raster does not match the flow raster".into(),
            ));
        }
        Some((i_a, i_b))
    } else {
        None
    };

    Ok(SceneSample {
        spec,
        gt_flow,
        valid,
        plane_ids,
        homographies,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fit_homography_dlt, PointPairs};
    use approx::assert_abs_diff_eq;

    fn full_region() -> Region {
        Region::HalfPlane {
            a: 1.0,
            b: 0.0,
            c: -2.0,
            inclusive: true,
        }
    }

    fn simple_camera(rotation: [f64; 3], translation: [f64; 3]) -> CameraParams {
        CameraParams {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            rotation,
            translation,
        }
    }

    fn two_plane_spec() -> SceneSpec {
        SceneSpec {
            height: 16,
            width: 24,
            camera: simple_camera([0.002, -0.004, 0.003], [0.2, -0.1, 0.05]),
            planes: vec![
                PlaneSpec {
                    n: [0.0, 0.0, 1.0],
                    d: 1.0,
                    region: Region::HalfPlane {
                        a: 1.0,
                        b: 0.0,
                        c: 0.0,
                        inclusive: true,
                    },
                },
                PlaneSpec {
                    n: [0.1, 0.0, 1.0],
                    d: 2.0,
                    region: Region::HalfPlane {
                        a: -1.0,
                        b: 0.0,
                        c: 0.0,
                        inclusive: false,
                    },
                },
            ],
            dynamic_objects: vec![],
            texture_seed: 7,
        }
    }

    fn grid_pairs(flow: &FlowField) -> PointPairs {
        let grid = flow.grid();
        let mut src = Vec::with_capacity(grid.len());
        let mut dst = Vec::with_capacity(grid.len());
        for (row, col, x, y) in grid.iter_coords() {
            let (u, v) = flow.at(row, col);
            src.push([x, y]);
            dst.push([x + u, y + v]);
        }
        PointPairs { src, dst }
    }

    #[test]
    fn zero_translation_flow_ignores_plane_geometry() {
        let camera = simple_camera([0.01, -0.02, 0.015], [0.0, 0.0, 0.0]);
        let mut spec_a = SceneSpec {
            height: 10,
            width: 14,
            camera,
            planes: vec![PlaneSpec {
                n: [0.0, 0.0, 1.0],
                d: 1.0,
                region: full_region(),
            }],
            dynamic_objects: vec![],
            texture_seed: 0,
        };
        let mut spec_b = spec_a.clone();
        spec_b.planes[0].n = [0.2, -0.1, 1.0];
        spec_b.planes[0].d = 3.7;

        let a = build_scene(&spec_a).unwrap();
        let b = build_scene(&spec_b).unwrap();
        let bits = |f: &FlowField| -> Vec<(u64, u64)> {
            f.u()
                .iter()
                .zip(f.v())
                .map(|(u, v)| (u.to_bits(), v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a.gt_flow), bits(&b.gt_flow));

        // And the composite is a single homography: DLT nails it.
        let (_, residual) = fit_homography_dlt(&grid_pairs(&a.gt_flow)).unwrap();
        assert!(residual < 1e-9, "zero-translation residual {residual}");

        spec_a.camera.translation = [0.1, 0.0, 0.0];
        spec_b.camera.translation = [0.1, 0.0, 0.0];
        let a = build_scene(&spec_a).unwrap();
        let b = build_scene(&spec_b).unwrap();
        assert_ne!(bits(&a.gt_flow), bits(&b.gt_flow));
    }

    #[test]
    fn per_plane_flow_is_bit_exact() {
        let spec = two_plane_spec();
        let sample = build_scene(&spec).unwrap();
        let grid = sample.gt_flow.grid();
        for k in 0..2 {
            let plane_flow = flow_from_homography(&sample.homographies[k], grid).unwrap();
            for i in 0..grid.len() {
                if sample.plane_ids[i] == k as u8 {
                    assert_eq!(sample.gt_flow.u()[i].to_bits(), plane_flow.u()[i].to_bits());
                    assert_eq!(sample.gt_flow.v()[i].to_bits(), plane_flow.v()[i].to_bits());
                }
            }
        }
        // Both planes own a nontrivial share of the raster.
        let left = sample.plane_ids.iter().filter(|&&id| id == 0).count();
        assert!(left > 0 && left < grid.len());
    }

    #[test]
    fn composite_defeats_a_single_homography_but_not_per_plane_fits() {
        let sample = build_scene(&two_plane_spec()).unwrap();
        let grid = sample.gt_flow.grid();

        let (_, composite_residual) = fit_homography_dlt(&grid_pairs(&sample.gt_flow)).unwrap();
        assert!(
            composite_residual > 1e-3,
            "composite residual {composite_residual}"
        );

        for k in 0..2 {
            let mut src = Vec::new();
            let mut dst = Vec::new();
            for (row, col, x, y) in grid.iter_coords() {
                let i = grid.index(row, col);
                if sample.plane_ids[i] == k as u8 {
                    let (u, v) = sample.gt_flow.at(row, col);
                    src.push([x, y]);
                    dst.push([x + u, y + v]);
                }
            }
            let (_, residual) = fit_homography_dlt(&PointPairs { src, dst }).unwrap();
            assert!(residual < 1e-9, "plane {k} residual {residual}");
        }
    }

    #[test]
    fn dynamic_objects_overwrite_flow_and_validity() {
        let mut spec = two_plane_spec();
        spec.dynamic_objects = vec![DynamicObject {
            region: Rect {
                x_min: -0.25,
                x_max: 0.25,
                y_min: -0.25,
                y_max: 0.25,
            },
            motion: [0.05, -0.03],
        }];
        let sample = build_scene(&spec).unwrap();
        let grid = sample.gt_flow.grid();
        let clean = build_scene(&two_plane_spec()).unwrap();

        let mut stamped = 0usize;
        for (row, col, x, y) in grid.iter_coords() {
            let inside = spec.dynamic_objects[0].region.contains(x, y);
            let (u, v) = sample.gt_flow.at(row, col);
            if inside {
                assert_eq!((u, v), (0.05, -0.03));
                assert!(!sample.valid.at(row, col));
                stamped += 1;
            } else {
                let (cu, cv) = clean.gt_flow.at(row, col);
                assert_eq!(u.to_bits(), cu.to_bits());
                assert_eq!(v.to_bits(), cv.to_bits());
                assert_eq!(sample.valid.at(row, col), clean.valid.at(row, col));
            }
        }
        assert!(stamped > 0);
    }

    #[test]
    fn partition_violations_are_reported_per_pixel() {
        let mut spec = two_plane_spec();
        // Make both half-planes inclusive: pixels exactly on x = 0 would
        // overlap, but the 24-wide grid has none, so widen the second
        // region instead.
        spec.planes[1].region = Region::HalfPlane {
            a: -1.0,
            b: 0.0,
            c: -0.5,
            inclusive: false,
        };
        let err = build_scene(&spec).unwrap_err();
        assert!(matches!(err, SynthError::PartitionOverlap { first: 0, second: 1, .. }));

        spec.planes[1].region = Region::HalfPlane {
            a: -1.0,
            b: 0.0,
            c: 0.5,
            inclusive: false,
        };
        let err = build_scene(&spec).unwrap_err();
        assert!(matches!(err, SynthError::PartitionGap { .. }));
    }

    #[test]
    fn spec_validation_catches_bad_planes() {
        let mut spec = two_plane_spec();
        spec.planes[0].d = -1.0;
        assert!(matches!(build_scene(&spec), Err(SynthError::InvalidSpec(_))));

        let mut spec = two_plane_spec();
        spec.planes.clear();
        assert!(matches!(build_scene(&spec), Err(SynthError::InvalidSpec(_))));

        let mut spec = two_plane_spec();
        spec.dynamic_objects = vec![DynamicObject {
            region: Rect {
                x_min: 0.5,
                x_max: -0.5,
                y_min: -0.5,
                y_max: 0.5,
            },
            motion: [0.0, 0.0],
        }];
        assert!(matches!(build_scene(&spec), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn rendering_is_deterministic_and_identity_on_zero_flow() {
        let spec = SceneSpec {
            height: 12,
            width: 18,
            camera: simple_camera([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
            planes: vec![PlaneSpec {
                n: [0.0, 0.0, 1.0],
                d: 1.0,
                region: full_region(),
            }],
            dynamic_objects: vec![],
            texture_seed: 99,
        };
        let mut sample = build_scene(&spec).unwrap();
        assert!(sample.gt_flow.u().iter().all(|&u| u == 0.0));

        let (i_a, i_b) = render_pair(&mut sample, 99).unwrap();
        for (a, b) in i_a.data().iter().zip(i_b.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let mut again = build_scene(&spec).unwrap();
        let (j_a, j_b) = render_pair(&mut again, 99).unwrap();
        assert_eq!(
            i_a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            j_a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(
            i_b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            j_b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );

        let (_, k_b) = render_pair(&mut build_scene(&spec).unwrap(), 100).unwrap();
        assert_ne!(
            i_b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            k_b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn texture_spans_full_contrast() {
        let img = texture(40, 60, 5).unwrap();
        let min = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min, 0.0);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn suite_is_deterministic_and_sweeps_structure() {
        let a = benchmark_suite_on_grid(8, 42, 20, 30).unwrap();
        let b = benchmark_suite_on_grid(8, 42, 20, 30).unwrap();
        assert_eq!(a.len(), 8);
        for (s, t) in a.iter().zip(&b) {
            assert_eq!(s.spec, t.spec);
            let sb: Vec<u64> = s.gt_flow.u().iter().map(|v| v.to_bits()).collect();
            let tb: Vec<u64> = t.gt_flow.u().iter().map(|v| v.to_bits()).collect();
            assert_eq!(sb, tb);
            assert_eq!(s.valid.data(), t.valid.data());
            let (si, _) = s.images.as_ref().unwrap();
            let (ti, _) = t.images.as_ref().unwrap();
            assert_eq!(
                si.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                ti.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }

        let counts: Vec<usize> = a.iter().map(|s| s.spec.planes.len()).collect();
        assert_eq!(counts, vec![1, 2, 3, 1, 2, 3, 1, 2]);
        assert!(a[3].spec.dynamic_objects.len() == 1 && a[0].spec.dynamic_objects.is_empty());

        // Distinct child seeds produce distinct scenes.
        assert_ne!(a[0].spec.texture_seed, a[3].spec.texture_seed);
    }

    #[test]
    fn suite_single_plane_scenes_are_exactly_affine() {
        let suite = benchmark_suite_on_grid(4, 7, 18, 26).unwrap();
        let single = &suite[0];
        assert_eq!(single.spec.planes.len(), 1);
        // Affine by construction: no perspective terms.
        let c = single.homographies[0].coeffs();
        assert_eq!(c[6], 0.0);
        assert_eq!(c[7], 0.0);

        let (h, residual) = fit_homography_dlt(&grid_pairs(&single.gt_flow)).unwrap();
        assert!(residual < 1e-9);
        let grid = single.gt_flow.grid();
        let fitted = flow_from_homography(&h, grid).unwrap();
        let report = crate::evaluation::epe(&fitted, &single.gt_flow, None).unwrap();
        assert!(report.value < 1e-6, "single-plane epe {}", report.value);
    }

    #[test]
    fn scene_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("scene_000");
        let suite = benchmark_suite_on_grid(4, 11, 14, 20).unwrap();
        let sample = &suite[3]; // has a dynamic object and images

        save_scene(sample, &root).unwrap();
        let loaded = load_scene(&root).unwrap();
        assert_eq!(loaded.spec, sample.spec);
        assert_eq!(loaded.plane_ids, sample.plane_ids);
        assert_eq!(loaded.valid.data(), sample.valid.data());
        assert_eq!(loaded.homographies.len(), sample.homographies.len());
        for (a, b) in loaded.homographies.iter().zip(&sample.homographies) {
            for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for i in 0..sample.gt_flow.u().len() {
            assert_abs_diff_eq!(loaded.gt_flow.u()[i], sample.gt_flow.u()[i], epsilon = 1e-6);
            assert_abs_diff_eq!(loaded.gt_flow.v()[i], sample.gt_flow.v()[i], epsilon = 1e-6);
        }
        assert!(loaded.images.is_some());

        // A second save of the loaded scene reproduces every file
        // byte-for-byte: the on-disk representation is a fixed point.
        let root2 = dir.path().join("scene_001");
        save_scene(&loaded, &root2).unwrap();
        for name in [
            "spec.json",
            "gt_flow.flo",
            "valid.pgm",
            "plane_ids.pgm",
            "homographies.json",
            "i_a.pgm",
            "i_b.pgm",
        ] {
            let x = fs::read(root.join(name)).unwrap();
            let y = fs::read(root2.join(name)).unwrap();
            assert_eq!(x, y, "{name} changed across a load/save cycle");
        }
    }

    #[test]
    fn scene_spec_json_round_trip() {
        let spec = two_plane_spec();
        let json = serde_json::to_string_pretty(&spec).unwrap();
        assert!(json.contains("\"shape\": \"half_plane\""));
        let back: SceneSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn load_scene_rejects_inconsistent_directories() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("scene");
        let suite = benchmark_suite_on_grid(1, 3, 12, 16).unwrap();
        save_scene(&suite[0], &root).unwrap();

        // Doctor the spec to disagree with the flow raster.
        let spec_path = root.join("spec.json");
        let mut spec: SceneSpec = read_json(&spec_path).unwrap();
        spec.height += 1;
        write_json(&spec, &spec_path).unwrap();
        assert!(matches!(
            load_scene(&root),
            Err(SynthError::Inconsistent(_))
        ));
    }
}
