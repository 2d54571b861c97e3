//! Hybrid motion-basis modeling of 2D camera motion.
//!
//! Camera-induced pixel motion is represented as a linear combination of a
//! fixed stack of flow-field bases: 12 physical bases (the second-order
//! monomial expansion of homography-induced motion) plus stochastic bases
//! extracted by SVD from flows of randomly sampled homographies. Basis
//! weights are fitted to target flows under a per-pixel Laplace noise model
//! with closed-form scale estimation, which makes the fit robust to dynamic
//! objects and occlusions.
//!
//! Modules:
//! - [`geometry`]: projective transforms, homography-induced flows, DLT.
//! - [`basis`]: physical + stochastic basis construction and persistence.
//! - [`robustfit`]: weight estimation under the Laplace likelihood.
//! - [`imaging`]: grayscale images, backward warping, validity masks.
//! - [`evaluation`]: PME / EPE / PSNR / SSIM alignment metrics.
//! - [`synth`]: synthetic multi-plane scenes with exact ground truth.
//! - [`io`]: Middlebury `.flo` flow interchange.
//!
//! All internal math runs in normalized image coordinates, where the pixel
//! grid spans `[-1, 1]` on each axis. Pixel-unit conversion happens only at
//! I/O and metric boundaries.

pub mod basis;
pub mod evaluation;
pub mod geometry;
pub mod imaging;
pub mod io;
pub mod robustfit;
pub mod synth;
