//! Middlebury `.flo` flow interchange.
//!
//! Layout: 4-byte magic `"PIEH"`, little-endian `i32` width and height,
//! then row-major interleaved little-endian `f32` `(u, v)` pairs. Files
//! store **pixel** displacements; [`FlowField`] stores normalized units, so
//! the conversion `Δcol = u·(width−1)/2`, `Δrow = v·(height−1)/2` happens
//! here and nowhere else.
//!
//! Reading converts `f32` pixels to normalized `f64` and writing converts
//! back; because both steps carry relative error far below half an `f32`
//! ulp, a read→write round trip reproduces the file byte for byte.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{FlowField, PixelGrid};

/// Lowercase hex SHA-256 of a byte buffer, as used by bundle manifests and
/// run manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

const FLO_MAGIC: &[u8; 4] = b"PIEH";
/// Refuse headers that would allocate more than this many pixels.
const MAX_PIXELS: usize = 1 << 28;

/// Errors from `.flo` reading and writing; every variant names the file.
#[derive(Debug, Error)]
pub enum FloError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic {found:?}, expected {FLO_MAGIC:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: invalid dimensions {width}x{height}")]
    BadDimensions {
        path: PathBuf,
        width: i32,
        height: i32,
    },
    #[error("{path}: truncated payload, expected {expected} f32 samples")]
    Truncated { path: PathBuf, expected: usize },
    #[error("{path}: trailing bytes after the flow payload")]
    TrailingBytes { path: PathBuf },
    #[error("{path}: non-finite flow sample at flat index {index}")]
    NonFinite { path: PathBuf, index: usize },
    #[error("{path}: nonzero flow along a single-pixel axis is not representable")]
    DegenerateAxis { path: PathBuf },
}

impl FloError {
    fn io(path: &Path, source: io::Error) -> Self {
        FloError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Writes `flow` to `path`, converting normalized units to pixels.
///
/// Fails if any converted sample does not fit in a finite `f32`, or if a
/// single-pixel axis carries nonzero flow (its pixel scale is zero, so the
/// value would be silently lost).
pub fn write_flo(flow: &FlowField, path: &Path) -> Result<(), FloError> {
    let grid = flow.grid();
    let sx = grid.px_scale_x();
    let sy = grid.px_scale_y();
    if (sx == 0.0 && flow.u().iter().any(|&u| u != 0.0))
        || (sy == 0.0 && flow.v().iter().any(|&v| v != 0.0))
    {
        return Err(FloError::DegenerateAxis {
            path: path.to_owned(),
        });
    }

    let file = File::create(path).map_err(|e| FloError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(FLO_MAGIC).map_err(|e| FloError::io(path, e))?;
    w.write_i32::<LittleEndian>(grid.width as i32)
        .map_err(|e| FloError::io(path, e))?;
    w.write_i32::<LittleEndian>(grid.height as i32)
        .map_err(|e| FloError::io(path, e))?;
    for (i, (&u, &v)) in flow.u().iter().zip(flow.v()).enumerate() {
        let upx = (u * sx) as f32;
        let vpx = (v * sy) as f32;
        if !upx.is_finite() {
            return Err(FloError::NonFinite {
                path: path.to_owned(),
                index: 2 * i,
            });
        }
        if !vpx.is_finite() {
            return Err(FloError::NonFinite {
                path: path.to_owned(),
                index: 2 * i + 1,
            });
        }
        w.write_f32::<LittleEndian>(upx)
            .map_err(|e| FloError::io(path, e))?;
        w.write_f32::<LittleEndian>(vpx)
            .map_err(|e| FloError::io(path, e))?;
    }
    w.flush().map_err(|e| FloError::io(path, e))
}

/// Reads a `.flo` file, converting pixel units back to normalized flow.
pub fn read_flo(path: &Path) -> Result<FlowField, FloError> {
    let file = File::open(path).map_err(|e| FloError::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| FloError::io(path, e))?;
    if &magic != FLO_MAGIC {
        return Err(FloError::BadMagic {
            path: path.to_owned(),
            found: magic,
        });
    }
    let width = r
        .read_i32::<LittleEndian>()
        .map_err(|e| FloError::io(path, e))?;
    let height = r
        .read_i32::<LittleEndian>()
        .map_err(|e| FloError::io(path, e))?;
    if width <= 0 || height <= 0 || (width as usize) * (height as usize) > MAX_PIXELS {
        return Err(FloError::BadDimensions {
            path: path.to_owned(),
            width,
            height,
        });
    }
    let grid = PixelGrid::new(height as usize, width as usize)
        .expect("dimensions validated above");

    let n = grid.len();
    let expected = 2 * n;
    let mut payload = vec![0f32; expected];
    for (i, slot) in payload.iter_mut().enumerate() {
        *slot = match r.read_f32::<LittleEndian>() {
            Ok(s) => s,
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                let _ = i;
                return Err(FloError::Truncated {
                    path: path.to_owned(),
                    expected,
                });
            }
            Err(e) => return Err(FloError::io(path, e)),
        };
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(FloError::TrailingBytes {
                path: path.to_owned(),
            })
        }
        Err(e) => return Err(FloError::io(path, e)),
    }

    let sx = grid.px_scale_x();
    let sy = grid.px_scale_y();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for (pix, pair) in payload.chunks_exact(2).enumerate() {
        let (upx, vpx) = (pair[0], pair[1]);
        if !upx.is_finite() {
            return Err(FloError::NonFinite {
                path: path.to_owned(),
                index: 2 * pix,
            });
        }
        if !vpx.is_finite() {
            return Err(FloError::NonFinite {
                path: path.to_owned(),
                index: 2 * pix + 1,
            });
        }
        u.push(convert_axis(upx, sx, path)?);
        v.push(convert_axis(vpx, sy, path)?);
    }
    Ok(FlowField::new(grid, u, v).expect("samples validated above"))
}

fn convert_axis(px: f32, scale: f64, path: &Path) -> Result<f64, FloError> {
    if scale == 0.0 {
        if px != 0.0 {
            return Err(FloError::DegenerateAxis {
                path: path.to_owned(),
            });
        }
        Ok(0.0)
    } else {
        Ok(px as f64 / scale)
    }
}
