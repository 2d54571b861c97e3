//! The hybrid motion-basis set: 12 physical bases from the second-order
//! monomial expansion of homography-induced flow, plus stochastic bases
//! extracted by SVD from flows of randomly sampled homographies.
//!
//! Physical bases are the monomials `[1, x, y, xy, x², y²]` placed in the
//! u direction (v = 0) and then in the v direction, each scaled to unit
//! Frobenius norm. They are interpretable (translation, affine, quadratic
//! perspective terms) and are deliberately *not* orthogonalized.
//!
//! Stochastic bases complement them: random homographies are drawn with
//! `h1..h8 ~ N(0, gaussian_scale²)`, rejected when their projective
//! denominator comes within 0.1 of zero on the grid, converted to flows,
//! deflated against the physical span, and reduced to the top `N − 12`
//! left singular vectors. The result is orthonormal and orthogonal to the
//! physical span.

use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{flow_from_homography, FlowField, GeometryError, Homography, PixelGrid};
use crate::io::{read_flo, sha256_hex, write_flo, FloError};

/// Number of physical (monomial) bases; fixed by the second-order model.
pub const PHYSICAL_BASIS_COUNT: usize = 12;
/// Default total basis count (the ablation optimum).
pub const DEFAULT_BASIS_COUNT: usize = 24;
/// Default number of random homography samples feeding the SVD.
pub const DEFAULT_RANDOM_SAMPLES: usize = 512;
/// Default standard deviation of the random homography coefficients.
pub const DEFAULT_GAUSSIAN_SCALE: f64 = 1.0;
/// Default working grid (1/4-scale 320x576, same aspect).
pub const DEFAULT_GRID_HEIGHT: usize = 80;
/// See [`DEFAULT_GRID_HEIGHT`].
pub const DEFAULT_GRID_WIDTH: usize = 144;
/// Random homographies whose projective denominator drops below this
/// anywhere on the grid are rejected and redrawn.
pub const REJECTION_DENOM_MIN: f64 = 0.1;

/// Errors from basis construction and bundle persistence.
#[derive(Debug, Error)]
pub enum BasisError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flo(#[from] FloError),
    #[error("invalid basis spec: {0}")]
    InvalidSpec(String),
    #[error("grid {height}x{width} is too small for unit-norm monomial bases")]
    DegenerateGrid { height: usize, width: usize },
    #[error("stacked sample matrix has rank {achieved}, need {needed} components")]
    RankDeficient { needed: usize, achieved: usize },
    #[error("rejection sampling exhausted after {attempts} attempts")]
    SamplingExhausted { attempts: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bundle manifest problem: {detail}")]
    Manifest { path: PathBuf, detail: String },
    #[error("{file}: checksum mismatch, bundle file is corrupted")]
    ChecksumMismatch { file: PathBuf },
}

impl BasisError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        BasisError::Io {
            path: path.to_owned(),
            source,
        }
    }

    fn manifest(path: &Path, detail: impl Into<String>) -> Self {
        BasisError::Manifest {
            path: path.to_owned(),
            detail: detail.into(),
        }
    }
}

/// Identifies how a basis was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Physical,
    Stochastic,
}

/// Construction parameters for a hybrid basis set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub height: usize,
    pub width: usize,
    /// Total basis count, physical + stochastic.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_samples")]
    pub num_random_samples: usize,
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub gaussian_scale: f64,
}

fn default_n() -> usize {
    DEFAULT_BASIS_COUNT
}

fn default_samples() -> usize {
    DEFAULT_RANDOM_SAMPLES
}

fn default_scale() -> f64 {
    DEFAULT_GAUSSIAN_SCALE
}

impl BasisSpec {
    /// Spec with default sample count and Gaussian scale.
    pub fn new(height: usize, width: usize, n: usize, seed: u64) -> Self {
        Self {
            height,
            width,
            n,
            num_random_samples: DEFAULT_RANDOM_SAMPLES,
            seed,
            gaussian_scale: DEFAULT_GAUSSIAN_SCALE,
        }
    }

    /// Checks the spec and returns its grid.
    ///
    /// Requires `n ≥ 12` and `n − 12 ≤ min(num_random_samples, 2·h·w − 12)`
    /// so the SVD can actually produce the requested components; the grid
    /// needs both dimensions ≥ 2 so every monomial basis has nonzero norm.
    pub fn validate(&self) -> Result<PixelGrid, BasisError> {
        let grid = PixelGrid::new(self.height, self.width)?;
        if self.height < 2 || self.width < 2 {
            return Err(BasisError::DegenerateGrid {
                height: self.height,
                width: self.width,
            });
        }
        if self.n < PHYSICAL_BASIS_COUNT {
            return Err(BasisError::InvalidSpec(format!(
                "n = {} is below the {PHYSICAL_BASIS_COUNT} physical bases",
                self.n
            )));
        }
        let requested = self.n - PHYSICAL_BASIS_COUNT;
        let ambient = 2 * grid.len() - PHYSICAL_BASIS_COUNT;
        if requested > self.num_random_samples.min(ambient) {
            return Err(BasisError::InvalidSpec(format!(
                "n − 12 = {requested} exceeds min(num_random_samples = {}, 2hw − 12 = {ambient})",
                self.num_random_samples
            )));
        }
        if !(self.gaussian_scale.is_finite() && self.gaussian_scale > 0.0) {
            return Err(BasisError::InvalidSpec(format!(
                "gaussian_scale = {} must be positive and finite",
                self.gaussian_scale
            )));
        }
        Ok(grid)
    }
}

/// Provenance metadata carried by a [`BasisSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisMeta {
    pub n: usize,
    pub num_random_samples: usize,
    pub seed: u64,
    pub gaussian_scale: f64,
}

/// An ordered hybrid basis: physical bases first, then stochastic, every
/// entry unit Frobenius norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    grid: PixelGrid,
    bases: Vec<FlowField>,
    kinds: Vec<BasisKind>,
    meta: BasisMeta,
}

impl BasisSet {
    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn bases(&self) -> &[FlowField] {
        &self.bases
    }

    pub fn kinds(&self) -> &[BasisKind] {
        &self.kinds
    }

    pub fn meta(&self) -> &BasisMeta {
        &self.meta
    }

    /// Total basis count N.
    pub fn n(&self) -> usize {
        self.bases.len()
    }

    /// A new set holding the listed bases (in the given order), e.g. for
    /// basis-count ablations. Indices must be distinct and in range.
    pub fn subset(&self, indices: &[usize]) -> Result<BasisSet, BasisError> {
        let mut seen = vec![false; self.bases.len()];
        let mut bases = Vec::with_capacity(indices.len());
        let mut kinds = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.bases.len() || seen[i] {
                return Err(BasisError::InvalidSpec(format!(
                    "subset index {i} is out of range or repeated"
                )));
            }
            seen[i] = true;
            bases.push(self.bases[i].clone());
            kinds.push(self.kinds[i]);
        }
        if bases.is_empty() {
            return Err(BasisError::InvalidSpec("empty basis subset".into()));
        }
        Ok(BasisSet {
            grid: self.grid,
            bases,
            kinds,
            meta: BasisMeta {
                n: indices.len(),
                ..self.meta
            },
        })
    }
}

/// The 12 raw monomial flows, *before* unit normalization: for each
/// monomial `b ∈ [1, x, y, xy, x², y²]` over normalized coordinates, the
/// flow `(b, 0)` and then `(0, b)`; all six u-direction flows come first.
pub fn monomial_flows(grid: PixelGrid) -> Vec<FlowField> {
    let n = grid.len();
    let mut values: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(n)).collect();
    for (_, _, x, y) in grid.iter_coords() {
        values[0].push(1.0);
        values[1].push(x);
        values[2].push(y);
        values[3].push(x * y);
        values[4].push(x * x);
        values[5].push(y * y);
    }
    let mut flows = Vec::with_capacity(12);
    for b in &values {
        flows.push(
            FlowField::new(grid, b.clone(), vec![0.0; n]).expect("monomials are finite"),
        );
    }
    for b in &values {
        flows.push(
            FlowField::new(grid, vec![0.0; n], b.clone()).expect("monomials are finite"),
        );
    }
    flows
}

fn frobenius_norm(flow: &FlowField) -> f64 {
    flow.u()
        .iter()
        .chain(flow.v())
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt()
}

/// The 12 physical bases: [`monomial_flows`] scaled to unit Frobenius
/// norm. Fails on grids where a monomial vanishes identically (any
/// dimension < 2).
pub fn physical_bases(grid: PixelGrid) -> Result<Vec<FlowField>, BasisError> {
    monomial_flows(grid)
        .into_iter()
        .map(|flow| {
            let norm = frobenius_norm(&flow);
            if norm < 1e-300 {
                return Err(BasisError::DegenerateGrid {
                    height: grid.height,
                    width: grid.width,
                });
            }
            let (grid, u, v) = flow.into_parts();
            let u = u.into_iter().map(|s| s / norm).collect();
            let v = v.into_iter().map(|s| s / norm).collect();
            Ok(FlowField::new(grid, u, v)?)
        })
        .collect()
}

fn flow_to_column(flow: &FlowField) -> DVector<f64> {
    let n = flow.grid().len();
    let mut col = DVector::zeros(2 * n);
    col.rows_mut(0, n).copy_from_slice(flow.u());
    col.rows_mut(n, n).copy_from_slice(flow.v());
    col
}

fn column_to_flow(grid: PixelGrid, col: &DVector<f64>) -> FlowField {
    let n = grid.len();
    let u = col.as_slice()[..n].to_vec();
    let v = col.as_slice()[n..].to_vec();
    FlowField::new(grid, u, v).expect("basis columns are finite")
}

/// Smallest projective denominator of `h` over the grid. The denominator
/// is affine in (x, y), so its extrema sit at the grid corners.
fn min_denominator(h: &[f64; 8], grid: PixelGrid) -> f64 {
    let xs = [grid.norm_x(0), grid.norm_x(grid.width - 1)];
    let ys = [grid.norm_y(0), grid.norm_y(grid.height - 1)];
    let mut lo = f64::INFINITY;
    for &x in &xs {
        for &y in &ys {
            lo = lo.min((h[6] * x + h[7] * y + 1.0).abs());
        }
    }
    lo
}

/// Top `count` left singular vectors of `d` (columns assumed zero-mean-ish
/// and comparable scale), via the eigendecomposition of the Gram matrix
/// DᵀD. Fails when fewer than `count` singular values clear the rank
/// threshold.
fn top_left_singular(d: &DMatrix<f64>, count: usize) -> Result<Vec<DVector<f64>>, BasisError> {
    let gram = d.tr_mul(d);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues of a Gram matrix are finite")
            .then(a.cmp(&b))
    });
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let threshold = lambda_max * 1e-12;
    let achieved = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > threshold && eig.eigenvalues[i] > 0.0)
        .count();
    if achieved < count {
        return Err(BasisError::RankDeficient {
            needed: count,
            achieved,
        });
    }
    Ok(order[..count]
        .iter()
        .map(|&i| {
            let v = eig.eigenvectors.column(i);
            (d * v) / eig.eigenvalues[i].sqrt()
        })
        .collect())
}

/// Extracts the `spec.n − 12` stochastic bases complementing `physical`.
///
/// The pipeline (seeded, deterministic): draw random homographies with
/// rejection on the projective denominator, convert to flows, flatten,
/// project out the physical span, take the top left singular vectors,
/// re-deflate and renormalize, and fix each basis's sign so its largest
/// entry (first, on ties) is positive.
pub fn stochastic_bases(
    grid: PixelGrid,
    spec: &BasisSpec,
    physical: &[FlowField],
) -> Result<Vec<FlowField>, BasisError> {
    let count = spec.n.saturating_sub(PHYSICAL_BASIS_COUNT);
    if count == 0 {
        return Ok(Vec::new());
    }
    assert_eq!(
        physical.len(),
        PHYSICAL_BASIS_COUNT,
        "physical basis list must hold exactly {PHYSICAL_BASIS_COUNT} flows"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.gaussian_scale)
        .expect("gaussian_scale validated as positive and finite");

    let two_n = 2 * grid.len();
    let mut d = DMatrix::<f64>::zeros(two_n, spec.num_random_samples);
    let max_attempts = 1000 * spec.num_random_samples;
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    while accepted < spec.num_random_samples {
        if attempts >= max_attempts {
            return Err(BasisError::SamplingExhausted { attempts });
        }
        attempts += 1;
        let mut coeffs = [0.0f64; 8];
        for c in &mut coeffs {
            *c = normal.sample(&mut rng);
        }
        if min_denominator(&coeffs, grid) < REJECTION_DENOM_MIN {
            continue;
        }
        let raw = [
            coeffs[0], coeffs[1], coeffs[2], //
            coeffs[3], coeffs[4], coeffs[5], //
            coeffs[6], coeffs[7], 1.0,
        ];
        let h = match Homography::from_coeffs(raw) {
            Ok(h) => h,
            // Singular draws are rejected like horizon-crossing ones.
            Err(_) => continue,
        };
        let flow = flow_from_homography(&h, grid)?;
        d.set_column(accepted, &flow_to_column(&flow));
        accepted += 1;
    }

    // Project out the physical span: the bases are not orthogonal, so the
    // projection solves the 12x12 Gram system rather than dotting.
    let p = DMatrix::from_columns(
        &physical.iter().map(flow_to_column).collect::<Vec<_>>(),
    );
    let gram_p = p.tr_mul(&p);
    let chol = Cholesky::new(gram_p).ok_or(BasisError::RankDeficient {
        needed: PHYSICAL_BASIS_COUNT,
        achieved: 0,
    })?;
    let deflate = |m: &mut DMatrix<f64>| {
        let coeffs = chol.solve(&p.tr_mul(m));
        m.gemm(-1.0, &p, &coeffs, 1.0);
    };
    deflate(&mut d);

    let mut components = top_left_singular(&d, count)?;
    let mut comp_mat = DMatrix::from_columns(&components);
    deflate(&mut comp_mat);
    components.clear();

    let mut flows = Vec::with_capacity(count);
    for j in 0..count {
        let mut col: DVector<f64> = comp_mat.column(j).into_owned();
        let norm = col.norm();
        if norm < 1e-12 {
            return Err(BasisError::RankDeficient {
                needed: count,
                achieved: j,
            });
        }
        col /= norm;
        // Deterministic sign: make the first entry of largest magnitude
        // positive.
        let mut arg = 0usize;
        let mut best = 0.0f64;
        for (i, &s) in col.iter().enumerate() {
            if s.abs() > best {
                best = s.abs();
                arg = i;
            }
        }
        if col[arg] < 0.0 {
            col = -col;
        }
        flows.push(column_to_flow(grid, &col));
    }
    Ok(flows)
}

/// Builds the full hybrid set for `spec`: 12 physical bases followed by
/// `spec.n − 12` stochastic ones.
pub fn hybrid_basis(spec: &BasisSpec) -> Result<BasisSet, BasisError> {
    let grid = spec.validate()?;
    let physical = physical_bases(grid)?;
    let stochastic = stochastic_bases(grid, spec, &physical)?;
    let mut bases = physical;
    let mut kinds = vec![BasisKind::Physical; PHYSICAL_BASIS_COUNT];
    kinds.extend(std::iter::repeat(BasisKind::Stochastic).take(stochastic.len()));
    bases.extend(stochastic);
    Ok(BasisSet {
        grid,
        bases,
        kinds,
        meta: BasisMeta {
            n: spec.n,
            num_random_samples: spec.num_random_samples,
            seed: spec.seed,
            gaussian_scale: spec.gaussian_scale,
        },
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct GridDims {
    h: usize,
    w: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleEntry {
    file: String,
    kind: BasisKind,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    grid: GridDims,
    n: usize,
    num_random_samples: usize,
    seed: u64,
    gaussian_scale: f64,
    bases: Vec<BundleEntry>,
}

const MANIFEST_NAME: &str = "manifest.json";

/// Persists `set` under `dir`: one `.flo` file per basis plus a
/// `manifest.json` recording order, kinds, and SHA-256 checksums.
///
/// `.flo` files hold `f32` samples, so a freshly built `f64` set is
/// quantized on save; saving a *loaded* set reproduces its files byte for
/// byte.
pub fn save_bundle(set: &BasisSet, dir: &Path) -> Result<(), BasisError> {
    std::fs::create_dir_all(dir).map_err(|e| BasisError::io(dir, e))?;
    let mut entries = Vec::with_capacity(set.bases.len());
    for (i, (flow, &kind)) in set.bases.iter().zip(&set.kinds).enumerate() {
        let file = format!("basis_{i:03}.flo");
        let path = dir.join(&file);
        write_flo(flow, &path)?;
        let bytes = std::fs::read(&path).map_err(|e| BasisError::io(&path, e))?;
        entries.push(BundleEntry {
            file,
            kind,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = BundleManifest {
        grid: GridDims {
            h: set.grid.height,
            w: set.grid.width,
        },
        n: set.bases.len(),
        num_random_samples: set.meta.num_random_samples,
        seed: set.meta.seed,
        gaussian_scale: set.meta.gaussian_scale,
        bases: entries,
    };
    let path = dir.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| BasisError::manifest(&path, e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| BasisError::io(&path, e))
}

/// Loads a bundle saved by [`save_bundle`], verifying every checksum and
/// the manifest's internal consistency.
pub fn load_bundle(dir: &Path) -> Result<BasisSet, BasisError> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let json =
        std::fs::read_to_string(&manifest_path).map_err(|e| BasisError::io(&manifest_path, e))?;
    let manifest: BundleManifest = serde_json::from_str(&json)
        .map_err(|e| BasisError::manifest(&manifest_path, e.to_string()))?;

    if manifest.n != manifest.bases.len() {
        return Err(BasisError::manifest(
            &manifest_path,
            format!("n = {} but {} basis entries listed", manifest.n, manifest.bases.len()),
        ));
    }
    let grid = PixelGrid::new(manifest.grid.h, manifest.grid.w)?;
    let mut bases = Vec::with_capacity(manifest.n);
    let mut kinds = Vec::with_capacity(manifest.n);
    for (i, entry) in manifest.bases.iter().enumerate() {
        let path = dir.join(&entry.file);
        let bytes = std::fs::read(&path).map_err(|e| BasisError::io(&path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(BasisError::ChecksumMismatch { file: path });
        }
        let flow = read_flo(&path)?;
        if flow.grid() != grid {
            return Err(BasisError::manifest(
                &manifest_path,
                format!("{} is {:?}, manifest says {:?}", entry.file, flow.grid(), grid),
            ));
        }
        let expected_kind = if i < PHYSICAL_BASIS_COUNT {
            BasisKind::Physical
        } else {
            BasisKind::Stochastic
        };
        if entry.kind != expected_kind && manifest.n >= PHYSICAL_BASIS_COUNT {
            return Err(BasisError::manifest(
                &manifest_path,
                format!("basis {i} has kind {:?}, expected {:?}", entry.kind, expected_kind),
            ));
        }
        kinds.push(entry.kind);
        bases.push(flow);
    }
    Ok(BasisSet {
        grid,
        bases,
        kinds,
        meta: BasisMeta {
            n: manifest.n,
            num_random_samples: manifest.num_random_samples,
            seed: manifest.seed,
            gaussian_scale: manifest.gaussian_scale,
        },
    })
}
