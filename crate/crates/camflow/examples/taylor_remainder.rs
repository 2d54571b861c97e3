//! Brute-force bound on the quadratic-truncation error of projective
//! flows.
//!
//! The flow of a homography close to the identity is, to second order in
//! the coordinates, a polynomial with monomials [1, x, y, x², xy, y²] per
//! axis — exactly the span of the physical basis flows. This program
//! measures how much of a projective flow that quadratic truncation can
//! miss: for a family of near-identity homographies with perspective
//! coefficients |h7|, |h8| ≤ 0.01 it evaluates the analytic second-order
//! Taylor polynomial of the flow, computes the relative L2 residual
//! against the exact flow on the default raster, and reports the worst
//! case over a dense random sweep plus all sign-extreme corners of the
//! coefficient family.
//!
//! Any least-squares fit over the 12 physical bases can only do better
//! than the Taylor polynomial, so the printed worst case (plus margin) is
//! a sound frozen tolerance for fit tests over the same family.
//!
//! Run with: cargo run --release -p camflow --example taylor_remainder

use camflow::geometry::{flow_from_homography, Homography, PixelGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Coefficient family: gauge-fixed homographies near the identity.
/// h1, h5 ∈ 1 ± AFFINE; h2, h4 ∈ ± AFFINE; h3, h6 ∈ ± SHIFT;
/// h7, h8 ∈ ± PERSPECTIVE.
const AFFINE: f64 = 0.02;
const SHIFT: f64 = 0.05;
const PERSPECTIVE: f64 = 0.01;

const SWEEP: usize = 20_000;
const SEED: u64 = 0x00C0_FFEE;

/// Analytic second-order Taylor coefficients of the flow
/// (h1x + h2y + h3)/(h7x + h8y + 1) − x, ordered [1, x, y, x², xy, y²].
fn taylor_u(h: &[f64; 9]) -> [f64; 6] {
    let (h1, h2, h3, h7, h8) = (h[0], h[1], h[2], h[6], h[7]);
    [
        h3,
        (h1 - 1.0) - h3 * h7,
        h2 - h3 * h8,
        -h1 * h7 + h3 * h7 * h7,
        -(h1 * h8 + h2 * h7) + 2.0 * h3 * h7 * h8,
        -h2 * h8 + h3 * h8 * h8,
    ]
}

/// Same for the y component (h4x + h5y + h6)/(h7x + h8y + 1) − y.
fn taylor_v(h: &[f64; 9]) -> [f64; 6] {
    let (h4, h5, h6, h7, h8) = (h[3], h[4], h[5], h[6], h[7]);
    [
        h6,
        h4 - h6 * h7,
        (h5 - 1.0) - h6 * h8,
        -h4 * h7 + h6 * h7 * h7,
        -(h4 * h8 + h5 * h7) + 2.0 * h6 * h7 * h8,
        -h5 * h8 + h6 * h8 * h8,
    ]
}

fn eval_poly(c: &[f64; 6], x: f64, y: f64) -> f64 {
    c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
}

/// Relative L2 residual of the Taylor polynomial against the exact flow.
fn relative_remainder(h: &Homography, grid: PixelGrid) -> f64 {
    let flow = flow_from_homography(h, grid).expect("family stays clear of the horizon");
    let cu = taylor_u(h.coeffs());
    let cv = taylor_v(h.coeffs());
    let mut err = 0.0;
    let mut norm = 0.0;
    for (row, col, x, y) in grid.iter_coords() {
        let (u, v) = flow.at(row, col);
        let du = u - eval_poly(&cu, x, y);
        let dv = v - eval_poly(&cv, x, y);
        err += du * du + dv * dv;
        norm += u * u + v * v;
    }
    (err / norm.max(f64::MIN_POSITIVE)).sqrt()
}

fn main() {
    let grid = PixelGrid::new(80, 144).expect("static dimensions");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut worst = 0.0f64;
    let mut worst_h = [0.0; 9];
    let mut total = 0.0;
    let mut evaluated = 0usize;

    let consider = |coeffs: [f64; 9], worst: &mut f64, worst_h: &mut [f64; 9]| {
        let h = Homography::from_coeffs(coeffs).expect("family coefficients are valid");
        let rel = relative_remainder(&h, grid);
        if rel > *worst {
            *worst = rel;
            *worst_h = *h.coeffs();
        }
        rel
    };

    for _ in 0..SWEEP {
        let coeffs = [
            1.0 + rng.random_range(-AFFINE..=AFFINE),
            rng.random_range(-AFFINE..=AFFINE),
            rng.random_range(-SHIFT..=SHIFT),
            rng.random_range(-AFFINE..=AFFINE),
            1.0 + rng.random_range(-AFFINE..=AFFINE),
            rng.random_range(-SHIFT..=SHIFT),
            rng.random_range(-PERSPECTIVE..=PERSPECTIVE),
            rng.random_range(-PERSPECTIVE..=PERSPECTIVE),
            1.0,
        ];
        total += consider(coeffs, &mut worst, &mut worst_h);
        evaluated += 1;
    }

    // All 2^8 sign-extreme corners of the family: the remainder is largest
    // where every coefficient sits at its bound.
    for bits in 0..256u32 {
        let s = |k: u32| if bits >> k & 1 == 1 { 1.0 } else { -1.0 };
        let coeffs = [
            1.0 + s(0) * AFFINE,
            s(1) * AFFINE,
            s(2) * SHIFT,
            s(3) * AFFINE,
            1.0 + s(4) * AFFINE,
            s(5) * SHIFT,
            s(6) * PERSPECTIVE,
            s(7) * PERSPECTIVE,
            1.0,
        ];
        total += consider(coeffs, &mut worst, &mut worst_h);
        evaluated += 1;
    }

    println!("evaluated {evaluated} homographies on an 80x144 raster");
    println!("mean relative remainder: {:.6e}", total / evaluated as f64);
    println!("max  relative remainder: {:.6e}", worst);
    println!("worst coefficients: {worst_h:?}");
    println!(
        "suggested frozen tolerance (max x 1.25): {:.6e}",
        worst * 1.25
    );
}
