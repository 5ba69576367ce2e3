//! DMAP: binary raster container for density and scale maps.
//!
//! Little-endian layout, 40-byte header followed by the payload:
//!
//! ```text
//! offset size field
//!      0    4 magic "DMAP"
//!      4    1 version (1)
//!      5    1 plane tag (0 = image, 1 = head)
//!      6    2 reserved (0)
//!      8    4 cols (u32)
//!     12    4 rows (u32)
//!     16    8 cell size (f64; meters on the head plane, 1.0 on the image plane)
//!     24    8 origin x (f64)
//!     32    8 origin y (f64)
//!     40    . rows * cols f32 values, row-major
//! ```

use thiserror::Error;

use crate::density::{DensityError, DensityMap, Plane, RasterGrid};
use crate::geometry::ScaleMap;

pub const MAGIC: &[u8; 4] = b"DMAP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DmapError {
    #[error("file is shorter than the {HEADER_LEN}-byte header")]
    TruncatedHeader,
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid plane tag {0}")]
    BadPlaneTag(u8),
    #[error("reserved field must be zero, got {0}")]
    BadReserved(u16),
    #[error("payload is {found} bytes, expected {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid header geometry: {0}")]
    InvalidGeometry(String),
    #[error("expected an image-plane map for a scale map, got {0}")]
    NotImagePlane(Plane),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Decoded DMAP contents.
#[derive(Debug, Clone, PartialEq)]
pub struct DmapFile {
    pub plane: Plane,
    pub grid: RasterGrid,
    pub values: Vec<f32>,
}

impl DmapFile {
    pub fn from_density(map: &DensityMap) -> Self {
        Self {
            plane: map.plane(),
            grid: *map.grid(),
            values: map.values().iter().map(|v| *v as f32).collect(),
        }
    }

    pub fn from_scale_map(m: &ScaleMap) -> Self {
        Self {
            plane: Plane::Image,
            grid: RasterGrid::image(m.width(), m.height()),
            values: m.values().iter().map(|v| *v as f32).collect(),
        }
    }

    pub fn to_density(&self) -> Result<DensityMap, DmapError> {
        Ok(DensityMap::new(
            self.plane,
            self.grid,
            self.values.iter().map(|v| *v as f64).collect(),
        )?)
    }

    /// Zero or negative entries are read back as invalid pixels.
    pub fn to_scale_map(&self) -> Result<ScaleMap, DmapError> {
        if self.plane != Plane::Image {
            return Err(DmapError::NotImagePlane(self.plane));
        }
        ScaleMap::from_values(
            self.grid.cols,
            self.grid.rows,
            self.values.iter().map(|v| *v as f64).collect(),
        )
        .ok_or_else(|| DmapError::InvalidGeometry("empty scale map".into()))
    }
}

fn plane_tag(plane: Plane) -> u8 {
    match plane {
        Plane::Image => 0,
        Plane::Head => 1,
    }
}

pub fn encode(file: &DmapFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * file.values.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(plane_tag(file.plane));
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(file.grid.cols as u32).to_le_bytes());
    out.extend_from_slice(&(file.grid.rows as u32).to_le_bytes());
    out.extend_from_slice(&file.grid.cell_size.to_le_bytes());
    out.extend_from_slice(&file.grid.origin[0].to_le_bytes());
    out.extend_from_slice(&file.grid.origin[1].to_le_bytes());
    for v in &file.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<DmapFile, DmapError> {
    if bytes.len() < HEADER_LEN {
        return Err(DmapError::TruncatedHeader);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(DmapError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(DmapError::UnsupportedVersion(bytes[4]));
    }
    let plane = match bytes[5] {
        0 => Plane::Image,
        1 => Plane::Head,
        t => return Err(DmapError::BadPlaneTag(t)),
    };
    let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
    if reserved != 0 {
        return Err(DmapError::BadReserved(reserved));
    }
    let cols = u32_at(8) as usize;
    let rows = u32_at(12) as usize;
    let grid = RasterGrid {
        origin: [f64_at(24), f64_at(32)],
        cell_size: f64_at(16),
        cols,
        rows,
    };
    grid.validate()
        .map_err(|e| DmapError::InvalidGeometry(e.to_string()))?;

    let payload = &bytes[HEADER_LEN..];
    let expected = cols
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| DmapError::InvalidGeometry("raster size overflows".into()))?;
    if payload.len() != expected {
        return Err(DmapError::PayloadLength {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(DmapError::NonFinite(i));
    }
    Ok(DmapFile { plane, grid, values })
}
