//! Alignment metrics over optional validity masks: point matching error
//! (PME), end-point error (EPE), PSNR, and SSIM.
//!
//! PME and EPE are reported in **pixel** units — the units every external
//! flow benchmark uses — converting from the internal normalized units at
//! this boundary. PSNR and SSIM operate on `[0, 1]` intensities with peak
//! 1.0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FlowField, GeometryError, Homography, PixelGrid, PointPairs};
use crate::imaging::{ImageGray, Mask};

/// PSNR reported for a zero-MSE (identical) pair; keeps reports finite and
/// sortable.
pub const PSNR_CAP_DB: f64 = 300.0;
/// SSIM window side (11), Gaussian σ = 1.5.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Errors from metric evaluation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("grids differ: {a:?} vs {b:?}")]
    GridMismatch { a: PixelGrid, b: PixelGrid },
    #[error("image shapes differ: {ah}x{aw} vs {bh}x{bw}")]
    ShapeMismatch {
        ah: usize,
        aw: usize,
        bh: usize,
        bw: usize,
    },
    #[error("point pairs are empty or of unequal length ({src} vs {dst})")]
    BadPairs { src: usize, dst: usize },
    #[error("source point {index} lies outside the flow grid")]
    PointOutsideGrid { index: usize },
    #[error("no valid pixels to evaluate")]
    EmptyValidSet,
    #[error("image {height}x{width} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },
}

/// One computed metric: its name, value, how many pixels/pairs/windows
/// entered the mean, and the fraction of candidates that did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub count: usize,
    pub coverage: f64,
}

impl MetricReport {
    fn new(name: &str, value: f64, count: usize, total: usize) -> Self {
        Self {
            name: name.to_owned(),
            value,
            count,
            coverage: count as f64 / total.max(1) as f64,
        }
    }
}

/// A motion model for [`pme`]: either an explicit transform or its dense
/// flow-field rendering.
#[derive(Debug, Clone, Copy)]
pub enum Motion<'a> {
    Homography(&'a Homography),
    Flow(&'a FlowField),
}

/// Bilinear sample of a flow field at normalized coordinates `(x, y)`.
fn sample_flow(flow: &FlowField, x: f64, y: f64) -> (f64, f64) {
    let grid = flow.grid();
    // Normalized [−1, 1] to fractional pixel position.
    let col = (x + 1.0) * grid.px_scale_x();
    let row = (y + 1.0) * grid.px_scale_y();
    let c0f = col.floor();
    let r0f = row.floor();
    let fc = col - c0f;
    let fr = row - r0f;
    let c0 = c0f as usize;
    let r0 = r0f as usize;
    let c1 = (c0 + 1).min(grid.width - 1);
    let r1 = (r0 + 1).min(grid.height - 1);
    let lerp2 = |s: &[f64]| {
        let top = (1.0 - fc) * s[grid.index(r0, c0)] + fc * s[grid.index(r0, c1)];
        let bot = (1.0 - fc) * s[grid.index(r1, c0)] + fc * s[grid.index(r1, c1)];
        (1.0 - fr) * top + fr * bot
    };
    (lerp2(flow.u()), lerp2(flow.v()))
}

/// Point matching error: mean Euclidean distance, in pixels, between
/// motion-transported source points and their targets. Flow motion is
/// sampled bilinearly at each source point, which must lie inside the
/// grid's normalized square.
pub fn pme(motion: Motion, pairs: &PointPairs, grid: PixelGrid) -> Result<MetricReport, EvalError> {
    if pairs.src.is_empty() || pairs.src.len() != pairs.dst.len() {
        return Err(EvalError::BadPairs {
            src: pairs.src.len(),
            dst: pairs.dst.len(),
        });
    }
    if let Motion::Flow(flow) = motion {
        if flow.grid() != grid {
            return Err(EvalError::GridMismatch {
                a: flow.grid(),
                b: grid,
            });
        }
    }
    let sx = grid.px_scale_x();
    let sy = grid.px_scale_y();
    let mut total = 0.0;
    for (index, (&[x, y], &[tx, ty])) in pairs.src.iter().zip(&pairs.dst).enumerate() {
        let (mx, my) = match motion {
            Motion::Homography(h) => {
                let q = h.map_point([x, y])?;
                (q[0], q[1])
            }
            Motion::Flow(flow) => {
                if !((-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y)) {
                    return Err(EvalError::PointOutsideGrid { index });
                }
                let (u, v) = sample_flow(flow, x, y);
                (x + u, y + v)
            }
        };
        let dx = (mx - tx) * sx;
        let dy = (my - ty) * sy;
        total += (dx * dx + dy * dy).sqrt();
    }
    Ok(MetricReport::new(
        "pme",
        total / pairs.src.len() as f64,
        pairs.src.len(),
        pairs.src.len(),
    ))
}

/// End-point error: mean Euclidean norm, in pixels, of the per-pixel flow
/// difference over the valid set.
pub fn epe(
    pred: &FlowField,
    gt: &FlowField,
    valid: Option<&Mask>,
) -> Result<MetricReport, EvalError> {
    let grid = pred.grid();
    if gt.grid() != grid {
        return Err(EvalError::GridMismatch {
            a: grid,
            b: gt.grid(),
        });
    }
    if let Some(m) = valid {
        if m.height() != grid.height || m.width() != grid.width {
            return Err(EvalError::ShapeMismatch {
                ah: grid.height,
                aw: grid.width,
                bh: m.height(),
                bw: m.width(),
            });
        }
    }
    let sx = grid.px_scale_x();
    let sy = grid.px_scale_y();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..grid.len() {
        if let Some(m) = valid {
            if !m.data()[i] {
                continue;
            }
        }
        let du = (pred.u()[i] - gt.u()[i]) * sx;
        let dv = (pred.v()[i] - gt.v()[i]) * sy;
        total += (du * du + dv * dv).sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(EvalError::EmptyValidSet);
    }
    Ok(MetricReport::new(
        "epe",
        total / count as f64,
        count,
        grid.len(),
    ))
}

fn check_images(a: &ImageGray, b: &ImageGray, valid: Option<&Mask>) -> Result<(), EvalError> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(EvalError::ShapeMismatch {
            ah: a.height(),
            aw: a.width(),
            bh: b.height(),
            bw: b.width(),
        });
    }
    if let Some(m) = valid {
        if m.height() != a.height() || m.width() != a.width() {
            return Err(EvalError::ShapeMismatch {
                ah: a.height(),
                aw: a.width(),
                bh: m.height(),
                bw: m.width(),
            });
        }
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over the valid set, with peak 1.0:
/// `10·log10(1/MSE)`, capped at [`PSNR_CAP_DB`] for identical inputs.
pub fn psnr(a: &ImageGray, b: &ImageGray, valid: Option<&Mask>) -> Result<MetricReport, EvalError> {
    check_images(a, b, valid)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
        if let Some(m) = valid {
            if !m.data()[i] {
                continue;
            }
        }
        total += (x - y) * (x - y);
        count += 1;
    }
    if count == 0 {
        return Err(EvalError::EmptyValidSet);
    }
    let mse = total / count as f64;
    let value = if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    };
    Ok(MetricReport::new("psnr", value, count, a.data().len()))
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for r in 0..SSIM_WINDOW {
        for c in 0..SSIM_WINDOW {
            let dr = r as f64 - half;
            let dc = c as f64 - half;
            let g = (-(dr * dr + dc * dc) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[r * SSIM_WINDOW + c] = g;
            sum += g;
        }
    }
    for x in &mut w {
        *x /= sum;
    }
    w
}

/// Mean local SSIM with an 11×11 Gaussian window (σ = 1.5), C1 = 0.01²,
/// C2 = 0.03² on peak 1.0. Only fully interior windows count, and any
/// window touching an invalid pixel is excluded.
pub fn ssim(a: &ImageGray, b: &ImageGray, valid: Option<&Mask>) -> Result<MetricReport, EvalError> {
    check_images(a, b, valid)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(EvalError::ImageTooSmall {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    let weights = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    let window_rows = h - SSIM_WINDOW + 1;
    let window_cols = w - SSIM_WINDOW + 1;

    for top in 0..window_rows {
        'next_window: for left in 0..window_cols {
            if let Some(m) = valid {
                for r in 0..SSIM_WINDOW {
                    for c in 0..SSIM_WINDOW {
                        if !m.at(top + r, left + c) {
                            continue 'next_window;
                        }
                    }
                }
            }
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for r in 0..SSIM_WINDOW {
                for c in 0..SSIM_WINDOW {
                    let wgt = weights[r * SSIM_WINDOW + c];
                    let va = a.at(top + r, left + c);
                    let vb = b.at(top + r, left + c);
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let local = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
            total += local;
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::EmptyValidSet);
    }
    Ok(MetricReport::new(
        "ssim",
        total / count as f64,
        count,
        window_rows * window_cols,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_homography, flow_from_homography};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn node_pairs(grid: PixelGrid, h: &Homography) -> PointPairs {
        let mut src = Vec::new();
        for (r, c, x, y) in grid.iter_coords() {
            if r % 2 == 0 && c % 3 == 0 {
                src.push([x, y]);
            }
        }
        let dst = apply_homography(h, &src).unwrap();
        PointPairs { src, dst }
    }

    #[test]
    fn pme_identity_is_zero() {
        let grid = PixelGrid::new(9, 9).unwrap();
        let id = Homography::identity();
        let pairs = node_pairs(grid, &id);
        let report = pme(Motion::Homography(&id), &pairs, grid).unwrap();
        assert_abs_diff_eq!(report.value, 0.0, epsilon = 1e-12);
        assert_eq!(report.count, pairs.src.len());
        assert_eq!(report.coverage, 1.0);
    }

    #[test]
    fn pme_three_four_five() {
        // Pixel scales are 4 on a 9x9 grid, so a (3, 4)-pixel translation
        // is (0.75, 1.0) in normalized units.
        let grid = PixelGrid::new(9, 9).unwrap();
        let h = Homography::translation(0.75, 1.0).unwrap();
        let src = vec![[-0.5, -0.5], [0.0, 0.0], [0.25, -0.25]];
        let translated = apply_homography(&h, &src).unwrap();

        let exact = pme(
            Motion::Homography(&h),
            &PointPairs {
                src: src.clone(),
                dst: translated,
            },
            grid,
        )
        .unwrap();
        assert_abs_diff_eq!(exact.value, 0.0, epsilon = 1e-12);

        let untranslated = pme(
            Motion::Homography(&h),
            &PointPairs {
                src: src.clone(),
                dst: src,
            },
            grid,
        )
        .unwrap();
        assert_abs_diff_eq!(untranslated.value, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn pme_homography_equals_its_flow_rendering() {
        let grid = PixelGrid::new(20, 28).unwrap();
        let h = Homography::from_coeffs([
            1.02, 0.01, 0.03, -0.015, 0.985, -0.02, 0.02, -0.01, 1.0,
        ])
        .unwrap();
        let flow = flow_from_homography(&h, grid).unwrap();
        let pairs = node_pairs(grid, &h);
        let via_h = pme(Motion::Homography(&h), &pairs, grid).unwrap();
        let via_flow = pme(Motion::Flow(&flow), &pairs, grid).unwrap();
        assert!(
            (via_h.value - via_flow.value).abs() < 1e-6,
            "representation mismatch: {} vs {}",
            via_h.value,
            via_flow.value
        );
    }

    #[test]
    fn pme_rejects_bad_inputs() {
        let grid = PixelGrid::new(5, 5).unwrap();
        let id = Homography::identity();
        assert!(matches!(
            pme(
                Motion::Homography(&id),
                &PointPairs {
                    src: vec![],
                    dst: vec![]
                },
                grid
            ),
            Err(EvalError::BadPairs { .. })
        ));
        let flow = FlowField::zeros(grid);
        let outside = PointPairs {
            src: vec![[1.5, 0.0]],
            dst: vec![[1.5, 0.0]],
        };
        assert!(matches!(
            pme(Motion::Flow(&flow), &outside, grid),
            Err(EvalError::PointOutsideGrid { index: 0 })
        ));
    }

    #[test]
    fn epe_constant_offset_three_four_five() {
        // Pixel scales are 3 on a 7x7 grid.
        let grid = PixelGrid::new(7, 7).unwrap();
        let gt = FlowField::zeros(grid);
        let pred = FlowField::constant(grid, 1.0, 4.0 / 3.0);
        let report = epe(&pred, &gt, None).unwrap();
        assert_abs_diff_eq!(report.value, 5.0, epsilon = 1e-9);
        assert_eq!(report.count, 49);

        let same = epe(&gt, &gt, None).unwrap();
        assert_eq!(same.value, 0.0);
    }

    #[test]
    fn epe_mask_excludes_differing_pixels() {
        let grid = PixelGrid::new(4, 4).unwrap();
        let gt = FlowField::zeros(grid);
        let mut u = vec![0.0; 16];
        u[3] = 7.0;
        u[9] = -2.0;
        let pred = FlowField::new(grid, u, vec![0.0; 16]).unwrap();
        let data: Vec<bool> = (0..16).map(|i| i != 3 && i != 9).collect();
        let mask = Mask::new(4, 4, data).unwrap();
        let report = epe(&pred, &gt, Some(&mask)).unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.count, 14);
        assert_abs_diff_eq!(report.coverage, 14.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn epe_is_symmetric_and_checks_grids() {
        let grid = PixelGrid::new(6, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rand_flow = || {
            let u = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            FlowField::new(grid, u, v).unwrap()
        };
        let a = rand_flow();
        let b = rand_flow();
        let ab = epe(&a, &b, None).unwrap();
        let ba = epe(&b, &a, None).unwrap();
        assert_abs_diff_eq!(ab.value, ba.value, epsilon = 1e-12);

        let other = FlowField::zeros(PixelGrid::new(8, 6).unwrap());
        assert!(matches!(
            epe(&a, &other, None),
            Err(EvalError::GridMismatch { .. })
        ));
    }

    #[test]
    fn psnr_twenty_db_case_and_cap() {
        let a = ImageGray::zeros(8, 8).unwrap();
        let b = ImageGray::from_fn(8, 8, |_, _| 0.1).unwrap();
        let report = psnr(&a, &b, None).unwrap();
        assert_abs_diff_eq!(report.value, 20.0, epsilon = 1e-6);

        let capped = psnr(&a, &a, None).unwrap();
        assert_eq!(capped.value, PSNR_CAP_DB);
    }

    #[test]
    fn psnr_matches_direct_mse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = ImageGray::from_fn(9, 13, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let b = ImageGray::from_fn(9, 13, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let report = psnr(&a, &b, None).unwrap();
        let mse: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.data().len() as f64;
        let oracle = -10.0 * mse.log10();
        assert_abs_diff_eq!(report.value, oracle, epsilon = 1e-9);

        let sym = psnr(&b, &a, None).unwrap();
        assert_abs_diff_eq!(report.value, sym.value, epsilon = 1e-12);
    }

    #[test]
    fn ssim_identical_images_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = ImageGray::from_fn(16, 19, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let report = ssim(&a, &a, None).unwrap();
        assert_abs_diff_eq!(report.value, 1.0, epsilon = 1e-9);
        assert_eq!(report.count, (16 - 10) * (19 - 10));
    }

    #[test]
    fn ssim_constant_patch_closed_form() {
        let a = ImageGray::from_fn(12, 12, |_, _| 0.5).unwrap();
        let b = ImageGray::from_fn(12, 12, |_, _| 0.6).unwrap();
        let report = ssim(&a, &b, None).unwrap();
        // Variances vanish, so SSIM reduces to the luminance term.
        let expected = (2.0 * 0.5 * 0.6 + SSIM_C1) / (0.5f64.powi(2) + 0.6f64.powi(2) + SSIM_C1);
        assert_abs_diff_eq!(report.value, expected, epsilon = 1e-9);
    }

    #[test]
    fn ssim_detects_anti_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = ImageGray::from_fn(15, 18, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let b = ImageGray::from_fn(15, 18, |r, c| 1.0 - a.at(r, c)).unwrap();
        let report = ssim(&a, &b, None).unwrap();
        assert!(report.value < 0.5, "anti-correlated SSIM {}", report.value);
    }

    #[test]
    fn ssim_excludes_windows_touching_invalid_pixels() {
        let a = ImageGray::from_fn(13, 13, |r, c| ((r * 13 + c) % 7) as f64 / 7.0).unwrap();
        let full = ssim(&a, &a, None).unwrap();
        let mut mask = Mask::all_true(13, 13).unwrap();
        mask.set(6, 6, false);
        // The center pixel of a 13x13 image lies inside every one of the
        // nine 11x11 windows, so masking it leaves no usable window.
        assert!(matches!(
            ssim(&a, &a, Some(&mask)),
            Err(EvalError::EmptyValidSet)
        ));

        let mut corner = Mask::all_true(13, 13).unwrap();
        corner.set(0, 0, false);
        // Only the top-left window contains the corner pixel.
        let report = ssim(&a, &a, Some(&corner)).unwrap();
        assert_eq!(report.count, full.count - 1);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = ImageGray::zeros(10, 30).unwrap();
        assert!(matches!(
            ssim(&a, &a, None),
            Err(EvalError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn ssim_stays_in_range_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..5 {
            let a = ImageGray::from_fn(14, 14, |_, _| rng.random_range(0.0..1.0)).unwrap();
            let b = ImageGray::from_fn(14, 14, |_, _| rng.random_range(0.0..1.0)).unwrap();
            let r = ssim(&a, &b, None).unwrap();
            assert!((-1.0..=1.0).contains(&r.value));
            let s = ssim(&b, &a, None).unwrap();
            assert_abs_diff_eq!(r.value, s.value, epsilon = 1e-12);
        }
    }

    #[test]
    fn metric_report_serializes_cleanly() {
        let report = MetricReport::new("epe", 1.25, 10, 20);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["name"], "epe");
        assert_eq!(json["coverage"], 0.5);
        let back: MetricReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
    }
}
