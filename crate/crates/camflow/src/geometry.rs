//! Projective geometry: homographies, homography-induced flow fields, and
//! direct linear transform (DLT) estimation.
//!
//! Conventions used throughout the crate:
//! - A homography is stored as nine coefficients `h1..h9` in row-major
//!   order, renormalized so that `h9 = 1` (the fixed gauge).
//! - Flow fields live on a [`PixelGrid`] in normalized coordinates: column
//!   `c` of a `w`-wide grid maps to `x = 2c/(w-1) - 1`, so the image spans
//!   `[-1, 1]` on each axis. A one-wide axis maps to `0`.
//! - Flow samples are displacements `(u, v) = H(x, y) - (x, y)` in those
//!   normalized units.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gauge tolerance: `|h9|` below this cannot be renormalized to `h9 = 1`.
pub const GAUGE_EPS: f64 = 1e-12;
/// Determinant tolerance below which a homography is considered singular.
pub const DET_EPS: f64 = 1e-12;
/// Projective denominators smaller than this flag a point on the horizon.
pub const HORIZON_EPS: f64 = 1e-9;

/// Errors surfaced by geometric construction and estimation.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("grid dimensions must be positive, got {height}x{width}")]
    EmptyGrid { height: usize, width: usize },
    #[error("flow buffers hold {got} samples but the grid has {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("flow fields live on different grids: {a:?} vs {b:?}")]
    GridMismatch { a: PixelGrid, b: PixelGrid },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("homography gauge coefficient h9 = {h9:e} is too close to zero")]
    GaugeDegenerate { h9: f64 },
    #[error("homography is singular (det = {det:e})")]
    Singular { det: f64 },
    #[error("projective denominator {denom:e} vanishes at point index {index}")]
    HorizonAtPoint { index: usize, denom: f64 },
    #[error("projective denominator {denom:e} vanishes at grid node ({row}, {col})")]
    HorizonOnGrid { row: usize, col: usize, denom: f64 },
    #[error("camera pose is invalid: {0}")]
    InvalidPose(&'static str),
    #[error("need at least 4 point pairs, got {got}")]
    TooFewPairs { got: usize },
    #[error("src and dst hold {src} and {dst} points")]
    PairLengthMismatch { src: usize, dst: usize },
    #[error("point configuration is degenerate: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("requested {requested} samples but the grid has {available} nodes")]
    TooManySamples { requested: usize, available: usize },
}

/// A rectangular pixel lattice with its normalized-coordinate mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub height: usize,
    pub width: usize,
}

impl PixelGrid {
    pub fn new(height: usize, width: usize) -> Result<Self, GeometryError> {
        if height == 0 || width == 0 {
            return Err(GeometryError::EmptyGrid { height, width });
        }
        Ok(Self { height, width })
    }

    /// Number of grid nodes.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat row-major index of node `(row, col)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Normalized x of column `col`: `-1` at the left edge, `+1` at the
    /// right edge, `0` everywhere on a one-wide grid.
    #[inline]
    pub fn norm_x(&self, col: usize) -> f64 {
        if self.width <= 1 {
            0.0
        } else {
            2.0 * col as f64 / (self.width - 1) as f64 - 1.0
        }
    }

    /// Normalized y of row `row` (same convention as [`norm_x`](Self::norm_x)).
    #[inline]
    pub fn norm_y(&self, row: usize) -> f64 {
        if self.height <= 1 {
            0.0
        } else {
            2.0 * row as f64 / (self.height - 1) as f64 - 1.0
        }
    }

    /// Pixels per normalized unit along x: `(width - 1) / 2`.
    #[inline]
    pub fn px_scale_x(&self) -> f64 {
        (self.width.saturating_sub(1)) as f64 / 2.0
    }

    /// Pixels per normalized unit along y: `(height - 1) / 2`.
    #[inline]
    pub fn px_scale_y(&self) -> f64 {
        (self.height.saturating_sub(1)) as f64 / 2.0
    }

    /// Iterates `(row, col, x, y)` over all nodes in row-major order.
    pub fn iter_coords(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let grid = *self;
        (0..grid.height).flat_map(move |row| {
            let y = grid.norm_y(row);
            (0..grid.width).map(move |col| (row, col, grid.norm_x(col), y))
        })
    }
}

/// A plane-projective transform of the normalized image plane, stored
/// row-major with the gauge fixed at `h9 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Homography {
    h: [f64; 9],
}

impl Homography {
    /// Builds from raw coefficients, renormalizing so `h9 = 1`.
    ///
    /// Fails if any coefficient is non-finite, `|h9| < `[`GAUGE_EPS`], or
    /// the renormalized matrix is singular.
    pub fn from_coeffs(raw: [f64; 9]) -> Result<Self, GeometryError> {
        if raw.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite("homography coefficients"));
        }
        let h9 = raw[8];
        if h9.abs() < GAUGE_EPS {
            return Err(GeometryError::GaugeDegenerate { h9 });
        }
        let mut h = raw;
        for c in &mut h {
            *c /= h9;
        }
        h[8] = 1.0;
        if h.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite("renormalized coefficients"));
        }
        let out = Self { h };
        let det = out.det();
        if det.abs() < DET_EPS {
            return Err(GeometryError::Singular { det });
        }
        Ok(out)
    }

    /// Builds from a 3x3 matrix (row-major reading), renormalizing the gauge.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        Self::from_coeffs([
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ])
    }

    pub fn identity() -> Self {
        Self {
            h: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    /// Pure translation by `(dx, dy)` in normalized units.
    pub fn translation(dx: f64, dy: f64) -> Result<Self, GeometryError> {
        Self::from_coeffs([1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0])
    }

    /// Row-major coefficients `h1..h9` (with `h9 = 1`).
    pub fn coeffs(&self) -> &[f64; 9] {
        &self.h
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.h[0], self.h[1], self.h[2], //
            self.h[3], self.h[4], self.h[5], //
            self.h[6], self.h[7], self.h[8],
        )
    }

    pub fn det(&self) -> f64 {
        self.to_matrix().determinant()
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .to_matrix()
            .try_inverse()
            .ok_or(GeometryError::Singular { det: self.det() })?;
        Self::from_matrix(&inv)
    }

    /// Maps a single point, failing on a vanishing projective denominator.
    pub fn map_point(&self, p: [f64; 2]) -> Result<[f64; 2], GeometryError> {
        let [x, y] = p;
        let w = self.h[6] * x + self.h[7] * y + self.h[8];
        if w.abs() < HORIZON_EPS {
            return Err(GeometryError::HorizonAtPoint { index: 0, denom: w });
        }
        Ok([
            (self.h[0] * x + self.h[1] * y + self.h[2]) / w,
            (self.h[3] * x + self.h[4] * y + self.h[5]) / w,
        ])
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = <[f64; 9]>::deserialize(deserializer)?;
        Homography::from_coeffs(raw).map_err(serde::de::Error::custom)
    }
}

/// A dense flow field sampled on a [`PixelGrid`], in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub(crate) grid: PixelGrid,
    pub(crate) u: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl FlowField {
    /// Wraps row-major `u`/`v` buffers; both must hold `grid.len()` finite
    /// samples.
    pub fn new(grid: PixelGrid, u: Vec<f64>, v: Vec<f64>) -> Result<Self, GeometryError> {
        let expected = grid.len();
        if u.len() != expected {
            return Err(GeometryError::LengthMismatch {
                got: u.len(),
                expected,
            });
        }
        if v.len() != expected {
            return Err(GeometryError::LengthMismatch {
                got: v.len(),
                expected,
            });
        }
        if u.iter().chain(v.iter()).any(|s| !s.is_finite()) {
            return Err(GeometryError::NonFinite("flow samples"));
        }
        Ok(Self { grid, u, v })
    }

    pub fn zeros(grid: PixelGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// A spatially constant flow `(u, v)`.
    pub fn constant(grid: PixelGrid, u: f64, v: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            u: vec![u; n],
            v: vec![v; n],
        }
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    /// Row-major horizontal components.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Row-major vertical components.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        let i = self.grid.index(row, col);
        (self.u[i], self.v[i])
    }

    pub fn into_parts(self) -> (PixelGrid, Vec<f64>, Vec<f64>) {
        (self.grid, self.u, self.v)
    }
}

/// Matched 2D point sets, `dst[i]` being the image of `src[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPairs {
    pub src: Vec<[f64; 2]>,
    pub dst: Vec<[f64; 2]>,
}

impl PointPairs {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Calibrated two-view geometry of a single world plane: intrinsics `K`,
/// relative rotation `R`, translation `t`, plane normal `n`, and plane
/// distance `d` (in the first camera's frame).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    k: Matrix3<f64>,
    r: Matrix3<f64>,
    t: Vector3<f64>,
    n: Vector3<f64>,
    d: f64,
}

impl CameraPose {
    /// Validates that `R` is a rotation, `n` is unit-length, `d > 0`, and
    /// `K` is invertible.
    pub fn new(
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        n: Vector3<f64>,
        d: f64,
    ) -> Result<Self, GeometryError> {
        let all = k.iter().chain(r.iter()).chain(t.iter()).chain(n.iter());
        if all.chain(std::iter::once(&d)).any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite("camera pose"));
        }
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho > 1e-9 {
            return Err(GeometryError::InvalidPose("R is not orthogonal"));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidPose("R is not a proper rotation"));
        }
        if (n.norm() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidPose("plane normal is not unit-length"));
        }
        if d <= 0.0 {
            return Err(GeometryError::InvalidPose("plane distance must be positive"));
        }
        if k.determinant().abs() < DET_EPS {
            return Err(GeometryError::InvalidPose("K is not invertible"));
        }
        Ok(Self { k, r, t, n, d })
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn r(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn t(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn n(&self) -> &Vector3<f64> {
        &self.n
    }

    pub fn d(&self) -> f64 {
        self.d
    }
}

/// The plane-induced homography `K (R + t nᵀ / d) K⁻¹`, gauge-renormalized.
pub fn homography_from_pose(pose: &CameraPose) -> Result<Homography, GeometryError> {
    let k_inv = pose
        .k
        .try_inverse()
        .ok_or(GeometryError::InvalidPose("K is not invertible"))?;
    let m = pose.k * (pose.r + pose.t * pose.n.transpose() / pose.d) * k_inv;
    Homography::from_matrix(&m)
}

/// Maps each point through `h`, failing on the first vanishing denominator.
pub fn apply_homography(
    h: &Homography,
    points: &[[f64; 2]],
) -> Result<Vec<[f64; 2]>, GeometryError> {
    let c = h.coeffs();
    points
        .iter()
        .enumerate()
        .map(|(index, &[x, y])| {
            if !(x.is_finite() && y.is_finite()) {
                return Err(GeometryError::NonFinite("input points"));
            }
            let w = c[6] * x + c[7] * y + c[8];
            if w.abs() < HORIZON_EPS {
                return Err(GeometryError::HorizonAtPoint { index, denom: w });
            }
            Ok([
                (c[0] * x + c[1] * y + c[2]) / w,
                (c[3] * x + c[4] * y + c[5]) / w,
            ])
        })
        .collect()
}

/// Samples the displacement field `H(x, y) - (x, y)` on every grid node.
pub fn flow_from_homography(
    h: &Homography,
    grid: PixelGrid,
) -> Result<FlowField, GeometryError> {
    let c = h.coeffs();
    let n = grid.len();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for (row, col, x, y) in grid.iter_coords() {
        let w = c[6] * x + c[7] * y + c[8];
        if w.abs() < HORIZON_EPS {
            return Err(GeometryError::HorizonOnGrid { row, col, denom: w });
        }
        u.push((c[0] * x + c[1] * y + c[2]) / w - x);
        v.push((c[3] * x + c[4] * y + c[5]) / w - y);
    }
    Ok(FlowField { grid, u, v })
}

/// The composite transform "apply `h1`, then `h2`" (matrix product
/// `H2 · H1`), gauge-renormalized.
pub fn compose(h1: &Homography, h2: &Homography) -> Result<Homography, GeometryError> {
    Homography::from_matrix(&(h2.to_matrix() * h1.to_matrix()))
}

/// Samplewise flow sum. Fails when the fields live on different grids.
pub fn add_flows(f1: &FlowField, f2: &FlowField) -> Result<FlowField, GeometryError> {
    if f1.grid != f2.grid {
        return Err(GeometryError::GridMismatch {
            a: f1.grid,
            b: f2.grid,
        });
    }
    let u = f1.u.iter().zip(&f2.u).map(|(a, b)| a + b).collect();
    let v = f1.v.iter().zip(&f2.v).map(|(a, b)| a + b).collect();
    FlowField::new(f1.grid, u, v)
}

/// Isotropic (Hartley) normalization: translate the centroid to the origin
/// and scale so the RMS distance from it is `sqrt(2)`.
fn hartley_transform(points: &[[f64; 2]]) -> Result<Matrix3<f64>, GeometryError> {
    let n = points.len() as f64;
    let (cx, cy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    let (cx, cy) = (cx / n, cy / n);
    let ms = points
        .iter()
        .map(|p| {
            let dx = p[0] - cx;
            let dy = p[1] - cy;
            dx * dx + dy * dy
        })
        .sum::<f64>()
        / n;
    let rms = ms.sqrt();
    if rms < 1e-15 {
        return Err(GeometryError::DegenerateConfiguration(
            "all points coincide",
        ));
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply_affine(t: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    [
        t[(0, 0)] * p[0] + t[(0, 1)] * p[1] + t[(0, 2)],
        t[(1, 0)] * p[0] + t[(1, 1)] * p[1] + t[(1, 2)],
    ]
}

/// Scale-relative collinearity scan over all triples; only affordable
/// (and only meaningful) for minimal four-point configurations.
fn any_collinear_triple(points: &[[f64; 2]]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let [ax, ay] = points[i];
                let [bx, by] = points[j];
                let [cx, cy] = points[k];
                let (ux, uy) = (bx - ax, by - ay);
                let (vx, vy) = (cx - ax, cy - ay);
                let cross = ux * vy - uy * vx;
                let scale = (ux.hypot(uy) * vx.hypot(vy)).max(f64::MIN_POSITIVE);
                if cross.abs() < 1e-9 * scale {
                    return true;
                }
            }
        }
    }
    false
}

/// Estimates a homography from point pairs with the normalized DLT and
/// returns it with the RMS reprojection distance (in input units).
///
/// Degenerate configurations are rejected two ways: a minimal four-point
/// set with any collinear triple is refused outright (the solution is
/// never unique there), and larger sets — where collinear triples are
/// harmless as long as the whole configuration spans the plane — go
/// through a rank check on the normalized design matrix.
pub fn fit_homography_dlt(pairs: &PointPairs) -> Result<(Homography, f64), GeometryError> {
    let n = pairs.src.len();
    if pairs.dst.len() != n {
        return Err(GeometryError::PairLengthMismatch {
            src: n,
            dst: pairs.dst.len(),
        });
    }
    if n < 4 {
        return Err(GeometryError::TooFewPairs { got: n });
    }
    let finite = |ps: &[[f64; 2]]| ps.iter().all(|p| p[0].is_finite() && p[1].is_finite());
    if !finite(&pairs.src) || !finite(&pairs.dst) {
        return Err(GeometryError::NonFinite("point pairs"));
    }
    if n == 4 && (any_collinear_triple(&pairs.src) || any_collinear_triple(&pairs.dst)) {
        return Err(GeometryError::DegenerateConfiguration(
            "a minimal configuration has three collinear points",
        ));
    }

    let t_src = hartley_transform(&pairs.src)?;
    let t_dst = hartley_transform(&pairs.dst)?;

    // Accumulate AᵀA of the 2n x 9 DLT system directly; its eigenvector of
    // smallest eigenvalue is the least-squares null direction.
    let mut ata = DMatrix::<f64>::zeros(9, 9);
    let accumulate = |row: &[f64; 9], ata: &mut DMatrix<f64>| {
        for i in 0..9 {
            for j in i..9 {
                ata[(i, j)] += row[i] * row[j];
            }
        }
    };
    for (s, d) in pairs.src.iter().zip(&pairs.dst) {
        let [sx, sy] = apply_affine(&t_src, *s);
        let [dx, dy] = apply_affine(&t_dst, *d);
        accumulate(
            &[sx, sy, 1.0, 0.0, 0.0, 0.0, -dx * sx, -dx * sy, -dx],
            &mut ata,
        );
        accumulate(
            &[0.0, 0.0, 0.0, sx, sy, 1.0, -dy * sx, -dy * sy, -dy],
            &mut ata,
        );
    }
    for i in 0..9 {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("symmetric eigenvalues are finite")
    });
    let lambda_next = eig.eigenvalues[order[1]].max(0.0);
    let lambda_max = eig.eigenvalues[order[8]].max(0.0);
    // A second near-zero eigenvalue means the null direction — the
    // solution — is not unique.
    if lambda_next <= 1e-12 * lambda_max.max(f64::MIN_POSITIVE) {
        return Err(GeometryError::DegenerateConfiguration(
            "design matrix is rank-deficient",
        ));
    }
    let hv = eig.eigenvectors.column(order[0]);
    let h_norm = Matrix3::new(
        hv[0], hv[1], hv[2], //
        hv[3], hv[4], hv[5], //
        hv[6], hv[7], hv[8],
    );

    let t_dst_inv = t_dst
        .try_inverse()
        .expect("similarity transforms are invertible");
    let h = Homography::from_matrix(&(t_dst_inv * h_norm * t_src))?;

    let mapped = apply_homography(&h, &pairs.src)?;
    let mse = mapped
        .iter()
        .zip(&pairs.dst)
        .map(|(m, d)| {
            let dx = m[0] - d[0];
            let dy = m[1] - d[1];
            dx * dx + dy * dy
        })
        .sum::<f64>()
        / n as f64;
    Ok((h, mse.sqrt()))
}

/// Outcome of [`nonlinearity_gap`]: how well single homographies explain a
/// sum of two homography flows versus their composition's flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityReport {
    /// RMS DLT residual when fitting one homography to the summed flows.
    pub sum_fit_residual: f64,
    /// RMS DLT residual when fitting to the composed transform's flow.
    pub compose_fit_residual: f64,
    /// Largest pairwise coefficient distance between homographies fitted on
    /// disjoint sample subsets of the summed flow.
    pub solution_spread: f64,
}

impl NonlinearityReport {
    /// `sum_fit_residual / compose_fit_residual`, the headline gap.
    pub fn residual_ratio(&self) -> f64 {
        self.sum_fit_residual / self.compose_fit_residual.max(f64::MIN_POSITIVE)
    }
}

fn pairs_at_nodes(flow: &FlowField, nodes: &[usize]) -> PointPairs {
    let grid = flow.grid;
    let mut src = Vec::with_capacity(nodes.len());
    let mut dst = Vec::with_capacity(nodes.len());
    for &i in nodes {
        let row = i / grid.width;
        let col = i % grid.width;
        let x = grid.norm_x(col);
        let y = grid.norm_y(row);
        src.push([x, y]);
        dst.push([x + flow.u[i], y + flow.v[i]]);
    }
    PointPairs { src, dst }
}

/// Measures how far a sum of two homography flows is from being explained
/// by any single homography.
///
/// Samples `samples` distinct grid nodes (seeded, reproducible), fits a
/// homography by DLT to (a) the sum `flow(h1) + flow(h2)` and (b) the flow
/// of the composition `h2 ∘ h1`, and also refits (a) on disjoint subsets to
/// expose how unstable the compromise solution is.
pub fn nonlinearity_gap(
    h1: &Homography,
    h2: &Homography,
    grid: PixelGrid,
    samples: usize,
    seed: u64,
) -> Result<NonlinearityReport, GeometryError> {
    if samples < 8 {
        return Err(GeometryError::TooFewSamples {
            got: samples,
            min: 8,
        });
    }
    if samples > grid.len() {
        return Err(GeometryError::TooManySamples {
            requested: samples,
            available: grid.len(),
        });
    }

    let f1 = flow_from_homography(h1, grid)?;
    let f2 = flow_from_homography(h2, grid)?;
    let sum = add_flows(&f1, &f2)?;
    let composed = compose(h1, h2)?;
    let fc = flow_from_homography(&composed, grid)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<usize> = (0..grid.len()).collect();
    nodes.shuffle(&mut rng);
    nodes.truncate(samples);

    let (_, sum_fit_residual) = fit_homography_dlt(&pairs_at_nodes(&sum, &nodes))?;
    let (_, compose_fit_residual) = fit_homography_dlt(&pairs_at_nodes(&fc, &nodes))?;

    // Disjoint subsets: 4 when we can keep every subset at >= 4 points.
    let parts = if samples >= 16 { 4 } else { 2 };
    let per = samples / parts;
    let mut fits: Vec<Homography> = Vec::with_capacity(parts);
    for p in 0..parts {
        let chunk = &nodes[p * per..(p + 1) * per];
        let (h, _) = fit_homography_dlt(&pairs_at_nodes(&sum, chunk))?;
        fits.push(h);
    }
    let mut solution_spread = 0.0f64;
    for i in 0..fits.len() {
        for j in (i + 1)..fits.len() {
            let d = fits[i]
                .coeffs()
                .iter()
                .zip(fits[j].coeffs())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            solution_spread = solution_spread.max(d);
        }
    }

    Ok(NonlinearityReport {
        sum_fit_residual,
        compose_fit_residual,
        solution_spread,
    })
}
