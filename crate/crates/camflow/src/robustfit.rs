//! Weight estimation for motion bases under a per-pixel Laplace noise
//! model.
//!
//! Each flow residual component is modeled as Laplace-distributed with a
//! per-pixel scale σ (the confidence mask: large σ marks pixels — dynamic
//! objects, occlusions — that should not constrain camera motion). The
//! negative log-likelihood per pixel is
//!
//! ```text
//! nll(p) = 2·ln(√(2σ²)) + √(2/σ²)·(|Δu| + |Δv|)
//! ```
//!
//! whose minimizer in σ is the closed form `σ = (|Δu| + |Δv|)/√2`.
//! [`fit_weights_laplace`] alternates that scale update with an
//! iteratively reweighted least-squares step on the weights, giving an
//! estimator that is robust to heavy outliers; [`fit_weights_l2`] is the
//! non-robust baseline and the IRLS inner solver.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::BasisSet;
use crate::geometry::{FlowField, GeometryError, PixelGrid};
use crate::imaging::{ImageGray, Mask};

/// Ridge added to normal-equation diagonals before factorization.
pub const RIDGE: f64 = 1e-10;
/// Below this magnitude, the motion NLL in [`hybrid_loss`] is treated as
/// zero and the balancing term is dropped.
pub const BALANCE_GUARD: f64 = 1e-12;

/// Errors from basis fitting and likelihood evaluation.
#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("weight vector has {got} entries, basis set has {expected}")]
    WeightLength { got: usize, expected: usize },
    #[error("operands live on different grids: {a:?} vs {b:?}")]
    GridMismatch { a: PixelGrid, b: PixelGrid },
    #[error("image shapes differ: {ah}x{aw} vs {bh}x{bw}")]
    ShapeMismatch {
        ah: usize,
        aw: usize,
        bh: usize,
        bw: usize,
    },
    #[error("no valid pixels to evaluate")]
    EmptyValidSet,
    #[error("{got} valid pixels cannot constrain {needed} weights")]
    NotEnoughValidPixels { got: usize, needed: usize },
    #[error("normal equations are rank-deficient beyond ridge repair")]
    RankDeficient,
    #[error("likelihood evaluated to a non-finite value")]
    NonFiniteNll,
    #[error("invalid fit configuration: {0}")]
    BadConfig(String),
}

/// Basis coefficients, aligned with [`BasisSet`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector {
    pub w: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(n: usize) -> Self {
        Self { w: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Per-pixel Laplace scale σ in normalized flow units; the confidence
/// mask. Large σ marks unreliable pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMask {
    grid: PixelGrid,
    sigma: Vec<f64>,
}

impl ConfidenceMask {
    /// Wraps per-pixel scales; all must be positive and finite.
    pub fn new(grid: PixelGrid, sigma: Vec<f64>) -> Result<Self, FitError> {
        if sigma.len() != grid.len() {
            return Err(FitError::GridMismatch { a: grid, b: grid });
        }
        if sigma.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(FitError::BadConfig(
                "confidence scales must be positive and finite".into(),
            ));
        }
        Ok(Self { grid, sigma })
    }

    pub fn uniform(grid: PixelGrid, sigma: f64) -> Result<Self, FitError> {
        Self::new(grid, vec![sigma; grid.len()])
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.sigma[self.grid.index(row, col)]
    }
}

/// Knobs for [`fit_weights_laplace`]; the serde defaults match
/// [`FitConfig::default`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Relative NLL change below which the alternation stops.
    pub tol: f64,
    /// Residual floor δ in the IRLS weight 1/(σ·max(r, δ)).
    pub irls_delta: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// The predefined weight of the hybrid photometric/motion loss.
    pub balance_weight: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-8,
            irls_delta: 1e-6,
            sigma_min: 1e-3,
            sigma_max: 1e3,
            balance_weight: 1.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_iters < 1 {
            return Err(FitError::BadConfig("max_iters must be at least 1".into()));
        }
        let positives = [
            ("tol", self.tol),
            ("irls_delta", self.irls_delta),
            ("sigma_min", self.sigma_min),
            ("sigma_max", self.sigma_max),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(FitError::BadConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sigma_min > self.sigma_max {
            return Err(FitError::BadConfig("sigma_min exceeds sigma_max".into()));
        }
        if !self.balance_weight.is_finite() || self.balance_weight < 0.0 {
            return Err(FitError::BadConfig(
                "balance_weight must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// What a fit did: iteration count, the NLL after each iteration
/// (`nll_trace[0]` is the L2 initialization under uniform σ = 1), whether
/// the relative-change test fired, and the final weighted RMS residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub nll_trace: Vec<f64>,
    pub converged: bool,
    pub residual: f64,
}

/// Per-pixel linear combination Σᵢ wᵢ·basisᵢ.
pub fn synthesize_flow(set: &BasisSet, weights: &WeightVector) -> Result<FlowField, FitError> {
    if weights.len() != set.n() {
        return Err(FitError::WeightLength {
            got: weights.len(),
            expected: set.n(),
        });
    }
    let grid = set.grid();
    let mut u = vec![0.0; grid.len()];
    let mut v = vec![0.0; grid.len()];
    for (wi, basis) in weights.w.iter().zip(set.bases()) {
        for (acc, s) in u.iter_mut().zip(basis.u()) {
            *acc += wi * s;
        }
        for (acc, s) in v.iter_mut().zip(basis.v()) {
            *acc += wi * s;
        }
    }
    Ok(FlowField::new(grid, u, v)?)
}

fn check_grids(a: PixelGrid, b: PixelGrid) -> Result<(), FitError> {
    if a != b {
        return Err(FitError::GridMismatch { a, b });
    }
    Ok(())
}

fn check_mask(grid: PixelGrid, valid: Option<&Mask>) -> Result<(), FitError> {
    if let Some(m) = valid {
        if m.height() != grid.height || m.width() != grid.width {
            return Err(FitError::GridMismatch {
                a: grid,
                b: PixelGrid {
                    height: m.height(),
                    width: m.width(),
                },
            });
        }
    }
    Ok(())
}

#[inline]
fn is_valid(valid: Option<&Mask>, i: usize) -> bool {
    valid.map_or(true, |m| m.data()[i])
}

/// Mean per-pixel Laplace NLL of `pred` against `target` under the scales
/// in `mask`, over the valid set.
pub fn laplace_nll(
    target: &FlowField,
    pred: &FlowField,
    mask: &ConfidenceMask,
    valid: Option<&Mask>,
) -> Result<f64, FitError> {
    let grid = target.grid();
    check_grids(grid, pred.grid())?;
    check_grids(grid, mask.grid())?;
    check_mask(grid, valid)?;

    let sqrt2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..grid.len() {
        if !is_valid(valid, i) {
            continue;
        }
        let r = (target.u()[i] - pred.u()[i]).abs() + (target.v()[i] - pred.v()[i]).abs();
        let s = mask.sigma()[i];
        total += 2.0 * (sqrt2 * s).ln() + (sqrt2 / s) * r;
        count += 1;
    }
    if count == 0 {
        return Err(FitError::EmptyValidSet);
    }
    let nll = total / count as f64;
    if !nll.is_finite() {
        return Err(FitError::NonFiniteNll);
    }
    Ok(nll)
}

/// Closed-form per-pixel ML scale: σ = clamp(r/√2, σ_min, σ_max) with
/// r = |Δu| + |Δv|, the unique minimizer of the per-pixel NLL in σ.
pub fn sigma_ml_update(
    target: &FlowField,
    pred: &FlowField,
    sigma_min: f64,
    sigma_max: f64,
) -> Result<ConfidenceMask, FitError> {
    let grid = target.grid();
    check_grids(grid, pred.grid())?;
    if !(sigma_min > 0.0 && sigma_min.is_finite() && sigma_max >= sigma_min) {
        return Err(FitError::BadConfig(format!(
            "bad sigma bounds [{sigma_min}, {sigma_max}]"
        )));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let sigma = (0..grid.len())
        .map(|i| {
            let r =
                (target.u()[i] - pred.u()[i]).abs() + (target.v()[i] - pred.v()[i]).abs();
            (r / sqrt2).clamp(sigma_min, sigma_max)
        })
        .collect();
    ConfidenceMask::new(grid, sigma)
}

/// The design system of a fit: stacked valid-pixel u-rows then v-rows.
struct Design {
    /// 2P × N basis matrix over valid pixels.
    b: DMatrix<f64>,
    /// 2P target vector.
    t: DVector<f64>,
    /// Flat grid index of each of the P valid pixels.
    pixels: Vec<usize>,
}

fn build_design(
    set: &BasisSet,
    target: &FlowField,
    valid: Option<&Mask>,
) -> Result<Design, FitError> {
    let grid = set.grid();
    check_grids(grid, target.grid())?;
    check_mask(grid, valid)?;
    let pixels: Vec<usize> = (0..grid.len()).filter(|&i| is_valid(valid, i)).collect();
    if pixels.len() < set.n() {
        return Err(FitError::NotEnoughValidPixels {
            got: pixels.len(),
            needed: set.n(),
        });
    }
    let p = pixels.len();
    let mut b = DMatrix::zeros(2 * p, set.n());
    for (j, basis) in set.bases().iter().enumerate() {
        for (k, &i) in pixels.iter().enumerate() {
            b[(k, j)] = basis.u()[i];
            b[(p + k, j)] = basis.v()[i];
        }
    }
    let mut t = DVector::zeros(2 * p);
    for (k, &i) in pixels.iter().enumerate() {
        t[k] = target.u()[i];
        t[p + k] = target.v()[i];
    }
    Ok(Design { b, t, pixels })
}

/// Solves the (possibly row-weighted) normal equations with a small ridge.
fn solve_weighted(design: &Design, pixel_weights: Option<&[f64]>) -> Result<DVector<f64>, FitError> {
    let n = design.b.ncols();
    let (gram, rhs) = match pixel_weights {
        None => (design.b.tr_mul(&design.b), design.b.tr_mul(&design.t)),
        Some(omega) => {
            let p = design.pixels.len();
            let mut bs = design.b.clone();
            let mut ts = design.t.clone();
            for (k, &w) in omega.iter().enumerate() {
                let s = w.sqrt();
                bs.row_mut(k).scale_mut(s);
                bs.row_mut(p + k).scale_mut(s);
                ts[k] *= s;
                ts[p + k] *= s;
            }
            (bs.tr_mul(&bs), bs.tr_mul(&ts))
        }
    };
    let mut gram = gram;
    for i in 0..n {
        gram[(i, i)] += RIDGE;
    }
    let chol = Cholesky::new(gram).ok_or(FitError::RankDeficient)?;
    Ok(chol.solve(&rhs))
}

fn rms_residual(design: &Design, w: &DVector<f64>) -> f64 {
    let r = &design.t - &design.b * w;
    (r.norm_squared() / design.pixels.len() as f64).sqrt()
}

/// Ordinary least-squares weights over the valid pixels (normal equations
/// with a 1e-10 ridge). The baseline estimator and the IRLS inner solver.
pub fn fit_weights_l2(
    set: &BasisSet,
    target: &FlowField,
    valid: Option<&Mask>,
) -> Result<(WeightVector, FitReport), FitError> {
    let design = build_design(set, target, valid)?;
    let w = solve_weighted(&design, None)?;
    let residual = rms_residual(&design, &w);
    Ok((
        WeightVector {
            w: w.as_slice().to_vec(),
        },
        FitReport {
            iterations: 1,
            nll_trace: Vec::new(),
            converged: true,
            residual,
        },
    ))
}

/// Robust weight estimation: alternate the closed-form σ update with an
/// IRLS weighted least-squares step (per-pixel weight `1/(σ·max(r, δ))`)
/// until the relative NLL change drops below `cfg.tol` or `cfg.max_iters`
/// is hit.
///
/// The weighted step minimizes a majorizer of the NLL that the residual
/// floor δ dents near zero, so a raw step can raise the true NLL slightly
/// once residuals shrink below δ. Each step is therefore backtracked
/// (halved toward the current iterate) until it does not increase the
/// NLL, which makes the recorded trace non-increasing up to roundoff; if
/// even a vanishing step fails, the iterate is a fixed point and the
/// alternation stops.
///
/// `nll_trace[0]` is the NLL of the L2 initialization under uniform σ = 1;
/// entry t is the NLL after iteration t's σ and weight updates. The
/// returned [`ConfidenceMask`] is the ML scale of the final prediction.
pub fn fit_weights_laplace(
    set: &BasisSet,
    target: &FlowField,
    cfg: &FitConfig,
    valid: Option<&Mask>,
) -> Result<(WeightVector, ConfidenceMask, FitReport), FitError> {
    cfg.validate()?;
    let design = build_design(set, target, valid)?;
    let grid = set.grid();

    let mut w = solve_weighted(&design, None)?;
    let mut pred = &design.b * &w;

    let nll_of = |pred_vec: &DVector<f64>, sigma: &ConfidenceMask| -> Result<f64, FitError> {
        // NLL over the same valid set the design was built on.
        let sqrt2 = std::f64::consts::SQRT_2;
        let p = design.pixels.len();
        let mut total = 0.0;
        for (k, &i) in design.pixels.iter().enumerate() {
            let r = (design.t[k] - pred_vec[k]).abs()
                + (design.t[p + k] - pred_vec[p + k]).abs();
            let s = sigma.sigma()[i];
            total += 2.0 * (sqrt2 * s).ln() + (sqrt2 / s) * r;
        }
        let nll = total / p as f64;
        if !nll.is_finite() {
            return Err(FitError::NonFiniteNll);
        }
        Ok(nll)
    };

    let residual_field = |pred_vec: &DVector<f64>| -> FlowField {
        // Prediction as a full-grid flow so sigma_ml_update can run on it;
        // non-valid pixels copy the target (zero residual, σ = σ_min).
        let p = design.pixels.len();
        let mut u = target.u().to_vec();
        let mut v = target.v().to_vec();
        for (k, &i) in design.pixels.iter().enumerate() {
            u[i] = pred_vec[k];
            v[i] = pred_vec[p + k];
        }
        FlowField::new(grid, u, v).expect("predictions are finite")
    };

    let uniform = ConfidenceMask::uniform(grid, 1.0)?;
    let mut nll_trace = vec![nll_of(&pred, &uniform)?];
    let mut converged = false;
    let mut iterations = 0usize;
    let mut omega = vec![0.0f64; design.pixels.len()];

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let pred_flow = residual_field(&pred);
        let sigma = sigma_ml_update(target, &pred_flow, cfg.sigma_min, cfg.sigma_max)?;
        let p = design.pixels.len();
        for (k, &i) in design.pixels.iter().enumerate() {
            let r = (design.t[k] - pred[k]).abs() + (design.t[p + k] - pred[p + k]).abs();
            omega[k] = 1.0 / (sigma.sigma()[i] * r.max(cfg.irls_delta));
        }
        let proposal = solve_weighted(&design, Some(&omega))?;

        // The σ update alone never raises the NLL, so the NLL at the
        // current weights under the fresh σ is the bar the weight step
        // has to clear.
        let anchor = nll_of(&pred, &sigma)?;
        let step = &proposal - &w;
        let mut nll = anchor;
        let mut moved = false;
        let mut alpha = 1.0f64;
        for _ in 0..24 {
            let cand = &w + &step * alpha;
            let cand_pred = &design.b * &cand;
            let cand_nll = nll_of(&cand_pred, &sigma)?;
            if cand_nll <= anchor {
                w = cand;
                pred = cand_pred;
                nll = cand_nll;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }

        let prev = *nll_trace.last().expect("trace is non-empty");
        nll_trace.push(nll);
        if !moved || (nll - prev).abs() / prev.abs().max(1.0) < cfg.tol {
            converged = true;
            break;
        }
    }

    let final_flow = residual_field(&pred);
    let sigma = sigma_ml_update(target, &final_flow, cfg.sigma_min, cfg.sigma_max)?;

    // Weighted RMS residual under the final IRLS weights.
    let p = design.pixels.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &i) in design.pixels.iter().enumerate() {
        let du = design.t[k] - pred[k];
        let dv = design.t[p + k] - pred[p + k];
        let r = du.abs() + dv.abs();
        let wgt = 1.0 / (sigma.sigma()[i] * r.max(cfg.irls_delta));
        num += wgt * (du * du + dv * dv);
        den += wgt;
    }
    let residual = (num / den.max(f64::MIN_POSITIVE)).sqrt();

    Ok((
        WeightVector {
            w: w.as_slice().to_vec(),
        },
        sigma,
        FitReport {
            iterations,
            nll_trace,
            converged,
            residual,
        },
    ))
}

/// Mean 1D Laplace NLL of intensity residuals between a reference image
/// and a warped image, over the valid set: `ln(√(2σ²)) + √(2/σ²)·|a − b|`.
pub fn photometric_nll(
    img_ref: &ImageGray,
    img_warped: &ImageGray,
    mask: &ConfidenceMask,
    valid: &Mask,
) -> Result<f64, FitError> {
    let (h, w) = (img_ref.height(), img_ref.width());
    if img_warped.height() != h || img_warped.width() != w {
        return Err(FitError::ShapeMismatch {
            ah: h,
            aw: w,
            bh: img_warped.height(),
            bw: img_warped.width(),
        });
    }
    if mask.grid().height != h || mask.grid().width != w || valid.height() != h
        || valid.width() != w
    {
        return Err(FitError::GridMismatch {
            a: PixelGrid { height: h, width: w },
            b: mask.grid(),
        });
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (&a, &b)) in img_ref.data().iter().zip(img_warped.data()).enumerate() {
        if !valid.data()[i] {
            continue;
        }
        let s = mask.sigma()[i];
        total += (sqrt2 * s).ln() + (sqrt2 / s) * (a - b).abs();
        count += 1;
    }
    if count == 0 {
        return Err(FitError::EmptyValidSet);
    }
    let nll = total / count as f64;
    if !nll.is_finite() {
        return Err(FitError::NonFiniteNll);
    }
    Ok(nll)
}

/// Balanced total loss `nll_p + w·(|nll_p| / |nll_m|)·nll_m`; when
/// `|nll_m|` is below [`BALANCE_GUARD`] the balancing term is dropped.
/// Note the term equals `w·|nll_p|·sign(nll_m)`: rescaling the motion NLL
/// by any positive factor leaves it unchanged.
pub fn hybrid_loss(nll_p: f64, nll_m: f64, w: f64) -> f64 {
    if nll_m.abs() < BALANCE_GUARD {
        nll_p
    } else {
        nll_p + w * (nll_p.abs() / nll_m.abs()) * nll_m
    }
}
