//! Grayscale images, backward warping by flow fields, validity masks, and
//! binary PGM I/O.
//!
//! Warping is backward (inverse) with bilinear sampling: the output at
//! pixel `p` reads the input at `p + flow(p)` (flow converted to pixel
//! units). Samples whose footprint leaves the image are flagged invalid
//! and written as zero rather than clamped, so downstream losses and
//! metrics can exclude them.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{FlowField, PixelGrid};

/// Errors from image construction, warping, and PGM I/O.
#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image dimensions must be positive, got {height}x{width}")]
    EmptyImage { height: usize, width: usize },
    #[error("buffer holds {got} samples but {height}x{width} needs {expected}")]
    LengthMismatch {
        got: usize,
        expected: usize,
        height: usize,
        width: usize,
    },
    #[error("intensity {value} at flat index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("image is {ih}x{iw} but the flow grid is {fh}x{fw}")]
    DimensionMismatch {
        ih: usize,
        iw: usize,
        fh: usize,
        fw: usize,
    },
    #[error("mask shapes differ: {ah}x{aw} vs {bh}x{bw}")]
    MaskMismatch {
        ah: usize,
        aw: usize,
        bh: usize,
        bw: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

impl ImagingError {
    fn io(path: &Path, source: io::Error) -> Self {
        ImagingError::Io {
            path: path.to_owned(),
            source,
        }
    }

    fn parse(path: &Path, detail: impl Into<String>) -> Self {
        ImagingError::Parse {
            path: path.to_owned(),
            detail: detail.into(),
        }
    }
}

/// A row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImagingError> {
        if height == 0 || width == 0 {
            return Err(ImagingError::EmptyImage { height, width });
        }
        let expected = height * width;
        if data.len() != expected {
            return Err(ImagingError::LengthMismatch {
                got: data.len(),
                expected,
                height,
                width,
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(ImagingError::OutOfRange { index, value });
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self, ImagingError> {
        Self::new(height, width, vec![0.0; height * width])
    }

    /// Builds from a per-pixel function of `(row, col)`; values are
    /// validated like [`new`](Self::new).
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, ImagingError> {
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn grid(&self) -> PixelGrid {
        PixelGrid::new(self.height, self.width).expect("image dimensions are positive")
    }
}

/// A per-pixel boolean validity map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self, ImagingError> {
        let expected = height * width;
        if height == 0 || width == 0 {
            return Err(ImagingError::EmptyImage { height, width });
        }
        if data.len() != expected {
            return Err(ImagingError::LengthMismatch {
                got: data.len(),
                expected,
                height,
                width,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn all_true(height: usize, width: usize) -> Result<Self, ImagingError> {
        Self::new(height, width, vec![true; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Fraction of pixels that are valid.
    pub fn coverage(&self) -> f64 {
        self.count_true() as f64 / self.data.len() as f64
    }

    /// Pixelwise AND of two same-shaped masks.
    pub fn intersect(&self, other: &Mask) -> Result<Mask, ImagingError> {
        if self.height != other.height || self.width != other.width {
            return Err(ImagingError::MaskMismatch {
                ah: self.height,
                aw: self.width,
                bh: other.height,
                bw: other.width,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a && b)
            .collect();
        Mask::new(self.height, self.width, data)
    }
}

#[inline]
fn bilinear(img: &ImageGray, row_s: f64, col_s: f64) -> f64 {
    let r0f = row_s.floor();
    let c0f = col_s.floor();
    let fr = row_s - r0f;
    let fc = col_s - c0f;
    let r0 = r0f as usize;
    let c0 = c0f as usize;
    let r1 = (r0 + 1).min(img.height - 1);
    let c1 = (c0 + 1).min(img.width - 1);
    let top = (1.0 - fc) * img.at(r0, c0) + fc * img.at(r0, c1);
    let bot = (1.0 - fc) * img.at(r1, c0) + fc * img.at(r1, c1);
    (1.0 - fr) * top + fr * bot
}

/// Backward-warps `img` by `flow`: output(p) = bilinear sample of `img` at
/// `p + flow(p)` in pixel units. Returns the warped image and a mask that
/// is true exactly where the sample position lies inside
/// `[0, width−1] × [0, height−1]`; invalid pixels are written as zero.
pub fn warp_backward(
    img: &ImageGray,
    flow: &FlowField,
) -> Result<(ImageGray, Mask), ImagingError> {
    let grid = flow.grid();
    if grid.height != img.height || grid.width != img.width {
        return Err(ImagingError::DimensionMismatch {
            ih: img.height,
            iw: img.width,
            fh: grid.height,
            fw: grid.width,
        });
    }
    let sx = grid.px_scale_x();
    let sy = grid.px_scale_y();
    let max_col = (img.width - 1) as f64;
    let max_row = (img.height - 1) as f64;

    let mut out = vec![0.0; grid.len()];
    let mut valid = vec![false; grid.len()];
    for (row, col, _, _) in grid.iter_coords() {
        let i = grid.index(row, col);
        let col_s = col as f64 + flow.u()[i] * sx;
        let row_s = row as f64 + flow.v()[i] * sy;
        if col_s >= 0.0 && col_s <= max_col && row_s >= 0.0 && row_s <= max_row {
            out[i] = bilinear(img, row_s, col_s);
            valid[i] = true;
        }
    }
    Ok((
        ImageGray::new(img.height, img.width, out)?,
        Mask::new(img.height, img.width, valid)?,
    ))
}

/// True where `p + flow(p)` (pixel units) lands inside
/// `[0, width−1] × [0, height−1]` of an image with the given dimensions.
pub fn valid_region(flow: &FlowField, height: usize, width: usize) -> Mask {
    let grid = flow.grid();
    let sx = grid.px_scale_x();
    let sy = grid.px_scale_y();
    let max_col = (width.saturating_sub(1)) as f64;
    let max_row = (height.saturating_sub(1)) as f64;
    let mut data = vec![false; grid.len()];
    for (row, col, _, _) in grid.iter_coords() {
        let i = grid.index(row, col);
        let col_s = col as f64 + flow.u()[i] * sx;
        let row_s = row as f64 + flow.v()[i] * sy;
        data[i] = col_s >= 0.0 && col_s <= max_col && row_s >= 0.0 && row_s <= max_row;
    }
    Mask::new(grid.height, grid.width, data).expect("flow grid is non-empty")
}

/// Sample depth for PGM output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    /// maxval 255, one byte per sample.
    Eight,
    /// maxval 65535, two big-endian bytes per sample.
    Sixteen,
}

impl PgmDepth {
    fn maxval(self) -> u32 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

fn write_p5(
    path: &Path,
    width: usize,
    height: usize,
    maxval: u32,
    samples: impl Iterator<Item = u32>,
) -> Result<(), ImagingError> {
    let file = File::create(path).map_err(|e| ImagingError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{width} {height}\n{maxval}\n").map_err(|e| ImagingError::io(path, e))?;
    if maxval < 256 {
        for s in samples {
            w.write_all(&[s as u8]).map_err(|e| ImagingError::io(path, e))?;
        }
    } else {
        for s in samples {
            w.write_all(&(s as u16).to_be_bytes())
                .map_err(|e| ImagingError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| ImagingError::io(path, e))
}

struct RawPgm {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u32>,
}

fn read_p5(path: &Path) -> Result<RawPgm, ImagingError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ImagingError::io(path, e))?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImagingError::parse(path, "not a binary PGM (missing P5 magic)"));
    }

    // Header: three whitespace-separated integers, '#' comments allowed,
    // a single whitespace byte after maxval, then the raster.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Skip whitespace and comment lines.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(ImagingError::parse(path, "malformed PGM header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are utf-8");
        *field = text
            .parse()
            .map_err(|_| ImagingError::parse(path, "header field out of range"))?;
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImagingError::parse(path, "missing separator after maxval"));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ImagingError::parse(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImagingError::parse(path, format!("unsupported maxval {maxval}")));
    }
    let count = width * height;
    let raster = &bytes[pos..];
    let samples: Vec<u32> = if maxval < 256 {
        if raster.len() != count {
            return Err(ImagingError::parse(
                path,
                format!("raster holds {} bytes, expected {count}", raster.len()),
            ));
        }
        raster.iter().map(|&b| b as u32).collect()
    } else {
        if raster.len() != 2 * count {
            return Err(ImagingError::parse(
                path,
                format!("raster holds {} bytes, expected {}", raster.len(), 2 * count),
            ));
        }
        raster
            .chunks_exact(2)
            .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    if let Some(&bad) = samples.iter().find(|&&s| s > maxval as u32) {
        return Err(ImagingError::parse(
            path,
            format!("sample {bad} exceeds maxval {maxval}"),
        ));
    }
    Ok(RawPgm {
        width,
        height,
        maxval: maxval as u32,
        samples,
    })
}

/// Writes `img` as binary PGM (P5), quantizing intensities to the depth's
/// maxval by round-to-nearest.
pub fn write_pgm(img: &ImageGray, path: &Path, depth: PgmDepth) -> Result<(), ImagingError> {
    let maxval = depth.maxval();
    let m = maxval as f64;
    write_p5(
        path,
        img.width,
        img.height,
        maxval,
        img.data.iter().map(|&v| (v * m).round() as u32),
    )
}

/// Reads a binary PGM (any maxval up to 65535, 16-bit big-endian) and
/// normalizes intensities to `[0, 1]` by dividing by maxval.
pub fn read_pgm(path: &Path) -> Result<ImageGray, ImagingError> {
    let raw = read_p5(path)?;
    let m = raw.maxval as f64;
    let data = raw.samples.iter().map(|&s| s as f64 / m).collect();
    ImageGray::new(raw.height, raw.width, data)
}

/// Writes a mask as an 8-bit PGM with 0 (false) and 255 (true).
pub fn write_mask_pgm(mask: &Mask, path: &Path) -> Result<(), ImagingError> {
    write_p5(
        path,
        mask.width,
        mask.height,
        255,
        mask.data.iter().map(|&b| if b { 255 } else { 0 }),
    )
}

/// Reads a mask from a PGM: samples strictly above maxval/2 are true.
pub fn read_mask_pgm(path: &Path) -> Result<Mask, ImagingError> {
    let raw = read_p5(path)?;
    let half = raw.maxval / 2;
    let data = raw.samples.iter().map(|&s| s > half).collect();
    Mask::new(raw.height, raw.width, data)
}

/// Writes a per-pixel index map (e.g. plane ids) as a raw 8-bit PGM; the
/// stored samples are the ids themselves, not intensities.
pub fn write_indexed_pgm(
    ids: &[u8],
    height: usize,
    width: usize,
    path: &Path,
) -> Result<(), ImagingError> {
    if ids.len() != height * width {
        return Err(ImagingError::LengthMismatch {
            got: ids.len(),
            expected: height * width,
            height,
            width,
        });
    }
    write_p5(path, width, height, 255, ids.iter().map(|&b| b as u32))
}

/// Reads an index map written by [`write_indexed_pgm`].
pub fn read_indexed_pgm(path: &Path) -> Result<(Vec<u8>, usize, usize), ImagingError> {
    let raw = read_p5(path)?;
    if raw.maxval != 255 {
        return Err(ImagingError::parse(
            path,
            format!("index maps are 8-bit, found maxval {}", raw.maxval),
        ));
    }
    let ids = raw.samples.iter().map(|&s| s as u8).collect();
    Ok((ids, raw.height, raw.width))
}
