//! Head-plane ground truth, density rasters and image/head plane conversion.
//!
//! Densities are stored as values at cell centers. A head-plane map is in
//! people/m², an image-plane map in people/px²; the mass of a cell is its
//! value times the cell area.

use std::fmt;

use nalgebra::Point2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pixel_center, CameraIntrinsics, Direction, GeometryError, Homography, ScaleMap};

/// Default Gaussian kernel standard deviation on the head plane, meters.
pub const DEFAULT_SIGMA_M: f64 = 0.5;
/// Default head-plane raster resolution, meters per cell.
pub const DEFAULT_CELL_M: f64 = 0.1;
/// Kernels are truncated at this many standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("head {index} maps to ({x:.3}, {y:.3}) m, outside the head-plane grid")]
    HeadOutsideGrid { index: usize, x: f64, y: f64 },
    #[error("head {index} does not back-project onto the head plane in front of the camera")]
    HeadNotOnPlane { index: usize },
    #[error("annotation {index} at ({x}, {y}) lies outside the image")]
    AnnotationOutsideImage { index: usize, x: f64, y: f64 },
    #[error("expected a {expected} plane density map, got {found}")]
    PlaneMismatch { expected: Plane, found: Plane },
    #[error("dimension mismatch: expected {expected:?}, got {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("kernel sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid density values: {0}")]
    InvalidValues(String),
    #[error("image footprint on the head plane is unbounded (horizon in view)")]
    FootprintUnbounded,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Image,
    Head,
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Plane::Image => f.write_str("image"),
            Plane::Head => f.write_str("head"),
        }
    }
}

/// Regular raster of square cells. `origin` is the outer corner of cell
/// `(0, 0)`; columns run along `x`, rows along `y`, storage is row-major.
///
/// Head-plane grids are in meters; image grids use unit pixels at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub origin: [f64; 2],
    #[serde(rename = "cell_m")]
    pub cell_size: f64,
    pub cols: usize,
    pub rows: usize,
}

/// Head-plane raster support for ground-truth and predicted densities.
pub type HeadPlaneGrid = RasterGrid;

impl RasterGrid {
    pub fn new(origin: [f64; 2], cell_size: f64, cols: usize, rows: usize) -> Result<Self, DensityError> {
        let grid = Self {
            origin,
            cell_size,
            cols,
            rows,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Pixel raster of an image: unit cells, origin at the image corner.
    pub fn image(width: usize, height: usize) -> Self {
        Self {
            origin: [0.0, 0.0],
            cell_size: 1.0,
            cols: width,
            rows: height,
        }
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(DensityError::InvalidGrid(format!(
                "cell size must be positive, got {}",
                self.cell_size
            )));
        }
        if self.cols == 0 || self.rows == 0 {
            return Err(DensityError::InvalidGrid(format!(
                "grid must have at least one cell, got {}x{}",
                self.cols, self.rows
            )));
        }
        if !(self.origin[0].is_finite() && self.origin[1].is_finite()) {
            return Err(DensityError::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    /// Smallest cell-aligned grid (on the lattice of multiples of `cell_size`)
    /// containing every point with at least `margin` to spare.
    pub fn covering_points(points: &[Point2<f64>], margin: f64, cell_size: f64) -> Result<Self, DensityError> {
        if points.is_empty() {
            return Err(DensityError::InvalidGrid("no points to cover".into()));
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            lo = [lo[0].min(p.x), lo[1].min(p.y)];
            hi = [hi[0].max(p.x), hi[1].max(p.y)];
        }
        Self::covering_bounds(lo, hi, margin, cell_size)
    }

    /// Grid covering the head-plane footprint of a whole image.
    pub fn covering_image(
        h: &Homography,
        k: &CameraIntrinsics,
        margin: f64,
        cell_size: f64,
    ) -> Result<Self, DensityError> {
        let h = h.oriented(Direction::ImageToHead);
        let (w, ht) = (k.width as f64, k.height as f64);
        let corners = [
            Point2::new(0.0, 0.0),
            Point2::new(w, 0.0),
            Point2::new(w, ht),
            Point2::new(0.0, ht),
        ];
        let mapped = corners
            .iter()
            .map(|c| h.apply_in_front(c).ok_or(DensityError::FootprintUnbounded))
            .collect::<Result<Vec<_>, _>>()?;
        Self::covering_points(&mapped, margin, cell_size)
    }

    fn covering_bounds(lo: [f64; 2], hi: [f64; 2], margin: f64, cell_size: f64) -> Result<Self, DensityError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(DensityError::InvalidGrid(format!("cell size must be positive, got {cell_size}")));
        }
        let x0 = ((lo[0] - margin) / cell_size).floor();
        let y0 = ((lo[1] - margin) / cell_size).floor();
        let x1 = ((hi[0] + margin) / cell_size).floor() + 1.0;
        let y1 = ((hi[1] + margin) / cell_size).floor() + 1.0;
        Self::new(
            [x0 * cell_size, y0 * cell_size],
            cell_size,
            (x1 - x0) as usize,
            (y1 - y0) as usize,
        )
    }

    /// Grows the grid on its own cell lattice so every point is covered with
    /// `margin` to spare. Existing cells keep their positions.
    pub fn expanded_to_cover(&self, points: &[Point2<f64>], margin: f64) -> Self {
        let c = self.cell_size;
        let mut lo_i = 0i64;
        let mut lo_j = 0i64;
        let mut hi_i = self.cols as i64;
        let mut hi_j = self.rows as i64;
        for p in points {
            let i0 = ((p.x - margin - self.origin[0]) / c).floor() as i64;
            let j0 = ((p.y - margin - self.origin[1]) / c).floor() as i64;
            let i1 = ((p.x + margin - self.origin[0]) / c).floor() as i64 + 1;
            let j1 = ((p.y + margin - self.origin[1]) / c).floor() as i64 + 1;
            lo_i = lo_i.min(i0);
            lo_j = lo_j.min(j0);
            hi_i = hi_i.max(i1);
            hi_j = hi_j.max(j1);
        }
        Self {
            origin: [self.origin[0] + lo_i as f64 * c, self.origin[1] + lo_j as f64 * c],
            cell_size: c,
            cols: (hi_i - lo_i) as usize,
            rows: (hi_j - lo_j) as usize,
        }
    }

    /// Pads columns and rows up to the next multiple of `n` cells.
    pub fn padded_to_multiple(&self, n: usize) -> Self {
        let n = n.max(1);
        Self {
            cols: self.cols.div_ceil(n) * n,
            rows: self.rows.div_ceil(n) * n,
            ..*self
        }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2<f64> {
        Point2::new(
            self.origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Continuous index coordinates: cell `(i, j)` center sits at `(i, j)`.
    pub fn to_index_coords(&self, p: &Point2<f64>) -> (f64, f64) {
        (
            (p.x - self.origin[0]) / self.cell_size - 0.5,
            (p.y - self.origin[1]) / self.cell_size - 0.5,
        )
    }

    pub fn contains_point(&self, p: &Point2<f64>) -> bool {
        let x1 = self.origin[0] + self.cols as f64 * self.cell_size;
        let y1 = self.origin[1] + self.rows as f64 * self.cell_size;
        p.x >= self.origin[0] && p.y >= self.origin[1] && p.x < x1 && p.y < y1
    }

    pub fn cell_of(&self, p: &Point2<f64>) -> Option<(usize, usize)> {
        if !self.contains_point(p) {
            return None;
        }
        let i = ((p.x - self.origin[0]) / self.cell_size).floor() as usize;
        let j = ((p.y - self.origin[1]) / self.cell_size).floor() as usize;
        Some((i.min(self.cols - 1), j.min(self.rows - 1)))
    }

    /// Geometry equality up to floating-point representation noise.
    pub fn same_geometry(&self, other: &Self) -> bool {
        let tol = 1e-9 * self.cell_size.max(1.0);
        self.cols == other.cols
            && self.rows == other.rows
            && (self.cell_size - other.cell_size).abs() <= tol
            && (self.origin[0] - other.origin[0]).abs() <= tol
            && (self.origin[1] - other.origin[1]).abs() <= tol
    }
}

/// Boolean region-of-interest mask over a raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    cols: usize,
    rows: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(cols: usize, rows: usize, data: Vec<bool>) -> Result<Self, DensityError> {
        if data.len() != cols * rows {
            return Err(DensityError::DimensionMismatch {
                expected: (cols, rows),
                found: (data.len(), 1),
            });
        }
        Ok(Self { cols, rows, data })
    }

    pub fn full(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            rows,
            data: vec![true; cols * rows],
        }
    }

    pub fn from_fn(cols: usize, rows: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(cols * rows);
        for j in 0..rows {
            for i in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { cols, rows, data }
    }

    /// Cells where the map value is non-zero.
    pub fn from_nonzero(map: &DensityMap) -> Self {
        Self {
            cols: map.grid.cols,
            rows: map.grid.rows,
            data: map.values.iter().map(|v| *v != 0.0).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

/// A density raster tagged with the plane it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    plane: Plane,
    grid: RasterGrid,
    values: Vec<f64>,
}

impl DensityMap {
    pub fn new(plane: Plane, grid: RasterGrid, values: Vec<f64>) -> Result<Self, DensityError> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(DensityError::InvalidValues(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DensityError::InvalidValues(format!(
                "value {} at index {i} is negative or non-finite",
                values[i]
            )));
        }
        Ok(Self { plane, grid, values })
    }

    pub fn zeros(plane: Plane, grid: RasterGrid) -> Self {
        Self {
            plane,
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.grid
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn cell_area(&self) -> f64 {
        self.grid.cell_area()
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[self.grid.index(col, row)]
    }

    /// Total mass over the whole raster.
    pub fn mass(&self) -> f64 {
        let area = self.cell_area();
        self.values.iter().map(|v| v * area).sum()
    }

    /// Largest value and its `(col, row)`.
    pub fn peak(&self) -> ((usize, usize), f64) {
        let (idx, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        ((idx % self.grid.cols, idx / self.grid.cols), v)
    }

    /// Bilinear interpolation of cell-center values at a plane point.
    /// Neighbors outside the raster contribute zero.
    pub fn sample_bilinear(&self, p: &Point2<f64>) -> f64 {
        let (gx, gy) = self.grid.to_index_coords(p);
        let (i0, j0) = (gx.floor(), gy.floor());
        let (tx, ty) = (gx - i0, gy - j0);
        let (i0, j0) = (i0 as i64, j0 as i64);
        let (cols, rows) = (self.grid.cols as i64, self.grid.rows as i64);
        if i0 < -1 || j0 < -1 || i0 >= cols || j0 >= rows {
            return 0.0;
        }
        let at = |i: i64, j: i64| -> f64 {
            if i < 0 || j < 0 || i >= cols || j >= rows {
                0.0
            } else {
                self.values[(j * cols + i) as usize]
            }
        };
        (1.0 - tx) * (1.0 - ty) * at(i0, j0)
            + tx * (1.0 - ty) * at(i0 + 1, j0)
            + (1.0 - tx) * ty * at(i0, j0 + 1)
            + tx * ty * at(i0 + 1, j0 + 1)
    }

    /// The same map with values rounded through `f32`, as stored on disk.
    pub fn quantized(&self) -> Self {
        Self {
            plane: self.plane,
            grid: self.grid,
            values: self.values.iter().map(|v| *v as f32 as f64).collect(),
        }
    }

    /// Applies `f` to every value; results are clipped at zero.
    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        Self {
            plane: self.plane,
            grid: self.grid,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let out = f(i, *v);
                    if out.is_finite() {
                        out.max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }
}

/// Head annotations of one frame, in image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub frame: i64,
    pub heads: Vec<Point2<f64>>,
}

impl AnnotationSet {
    pub fn new(frame: i64, heads: Vec<Point2<f64>>) -> Self {
        Self { frame, heads }
    }

    pub fn count(&self) -> usize {
        self.heads.len()
    }

    pub fn validate_in_image(&self, k: &CameraIntrinsics) -> Result<(), DensityError> {
        match self.heads.iter().position(|p| !k.contains(p)) {
            Some(index) => Err(DensityError::AnnotationOutsideImage {
                index,
                x: self.heads[index].x,
                y: self.heads[index].y,
            }),
            None => Ok(()),
        }
    }

    /// Head positions on the head plane.
    pub fn to_head_plane(&self, h: &Homography) -> Result<Vec<Point2<f64>>, DensityError> {
        let h = h.oriented(Direction::ImageToHead);
        self.heads
            .iter()
            .enumerate()
            .map(|(index, p)| h.apply_in_front(p).ok_or(DensityError::HeadNotOnPlane { index }))
            .collect()
    }
}

fn check_sigma(sigma: f64) -> Result<(), DensityError> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(DensityError::InvalidSigma(sigma))
    }
}

/// Ground-truth head-plane density: one unit-mass isotropic Gaussian of
/// standard deviation `sigma` (meters) per annotated head, evaluated at cell
/// centers and truncated at 4 sigma.
pub fn head_plane_density(
    ann: &AnnotationSet,
    h: &Homography,
    sigma: f64,
    grid: &HeadPlaneGrid,
) -> Result<DensityMap, DensityError> {
    check_sigma(sigma)?;
    grid.validate()?;
    let centers = ann.to_head_plane(h)?;
    if let Some(index) = centers.iter().position(|c| !grid.contains_point(c)) {
        return Err(DensityError::HeadOutsideGrid {
            index,
            x: centers[index].x,
            y: centers[index].y,
        });
    }
    rasterize_gaussians(&centers, sigma, grid)
}

/// Sum of truncated unit-mass Gaussians at head-plane positions.
pub fn rasterize_gaussians(
    centers: &[Point2<f64>],
    sigma: f64,
    grid: &HeadPlaneGrid,
) -> Result<DensityMap, DensityError> {
    check_sigma(sigma)?;
    grid.validate()?;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let radius = TRUNCATION_SIGMAS * sigma;
    let r2 = radius * radius;
    let (ox, oy, cell) = (grid.origin[0], grid.origin[1], grid.cell_size);
    let cols = grid.cols;

    let mut values = vec![0.0; grid.len()];
    // Each row sums its heads in input order, so the result does not depend
    // on how rows are scheduled.
    values.par_chunks_mut(cols).enumerate().for_each(|(row, out)| {
        let cy = oy + (row as f64 + 0.5) * cell;
        for c in centers {
            let dy = cy - c.y;
            if dy.abs() > radius {
                continue;
            }
            let half = (r2 - dy * dy).sqrt();
            let lo = ((c.x - half - ox) / cell - 0.5).ceil().max(0.0);
            let hi = ((c.x + half - ox) / cell - 0.5).floor();
            if hi < 0.0 || lo > (cols - 1) as f64 {
                continue;
            }
            let (lo, hi) = (lo as usize, (hi as usize).min(cols - 1));
            for (col, v) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let dx = ox + (col as f64 + 0.5) * cell - c.x;
                let d2 = dx * dx + dy * dy;
                if d2 <= r2 {
                    *v += norm * (-d2 * inv_two_var).exp();
                }
            }
        }
    });
    Ok(DensityMap {
        plane: Plane::Head,
        grid: *grid,
        values,
    })
}

/// Image-plane density `F = M * G'(H p)` at every pixel center, with `G'`
/// sampled bilinearly. Pixels flagged invalid in `m` are zero.
pub fn head_to_image_density(
    head: &DensityMap,
    h: &Homography,
    m: &ScaleMap,
) -> Result<DensityMap, DensityError> {
    if head.plane != Plane::Head {
        return Err(DensityError::PlaneMismatch {
            expected: Plane::Head,
            found: head.plane,
        });
    }
    let h = h.oriented(Direction::ImageToHead);
    let (width, height) = (m.width(), m.height());
    let mut values = vec![0.0; width * height];
    values.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            if !m.is_valid(x, y) {
                continue;
            }
            if let Some(q) = h.apply_in_front(&pixel_center(x, y)) {
                *out = m.get(x, y) * head.sample_bilinear(&q);
            }
        }
    });
    Ok(DensityMap {
        plane: Plane::Image,
        grid: RasterGrid::image(width, height),
        values,
    })
}

/// Head-plane density from an image-plane one: each valid pixel's mass
/// `F * 1 px²` is splatted at `H p` with bilinear weights, then cell sums are
/// divided by the cell area. Mass landing outside `grid` is dropped.
pub fn image_to_head_density(
    image: &DensityMap,
    h: &Homography,
    m: &ScaleMap,
    grid: &HeadPlaneGrid,
) -> Result<DensityMap, DensityError> {
    if image.plane != Plane::Image {
        return Err(DensityError::PlaneMismatch {
            expected: Plane::Image,
            found: image.plane,
        });
    }
    if image.dims() != (m.width(), m.height()) {
        return Err(DensityError::DimensionMismatch {
            expected: (m.width(), m.height()),
            found: image.dims(),
        });
    }
    grid.validate()?;
    let h = h.oriented(Direction::ImageToHead);
    let pixel_area = image.cell_area();
    let (cols, rows) = (grid.cols as i64, grid.rows as i64);
    let mut acc = vec![0.0; grid.len()];

    for y in 0..m.height() {
        for x in 0..m.width() {
            let f = image.get(x, y);
            if f == 0.0 || !m.is_valid(x, y) {
                continue;
            }
            let Some(q) = h.apply_in_front(&pixel_center(x, y)) else {
                continue;
            };
            let mass = f * pixel_area;
            let (gx, gy) = grid.to_index_coords(&q);
            let (i0, j0) = (gx.floor(), gy.floor());
            let (tx, ty) = (gx - i0, gy - j0);
            let (i0, j0) = (i0 as i64, j0 as i64);
            let taps = [
                (i0, j0, (1.0 - tx) * (1.0 - ty)),
                (i0 + 1, j0, tx * (1.0 - ty)),
                (i0, j0 + 1, (1.0 - tx) * ty),
                (i0 + 1, j0 + 1, tx * ty),
            ];
            for (i, j, w) in taps {
                if i >= 0 && j >= 0 && i < cols && j < rows {
                    acc[(j * cols + i) as usize] += mass * w;
                }
            }
        }
    }
    let inv_area = 1.0 / grid.cell_area();
    acc.iter_mut().for_each(|v| *v *= inv_area);
    Ok(DensityMap {
        plane: Plane::Head,
        grid: *grid,
        values: acc,
    })
}

/// Number of people represented by the map, optionally restricted to `roi`.
pub fn total_count(map: &DensityMap, roi: Option<&Mask>) -> Result<f64, DensityError> {
    let area = map.cell_area();
    match roi {
        None => Ok(map.mass()),
        Some(mask) => {
            if mask.dims() != map.dims() {
                return Err(DensityError::DimensionMismatch {
                    expected: map.dims(),
                    found: mask.dims(),
                });
            }
            Ok(map
                .values
                .iter()
                .zip(mask.as_slice())
                .filter(|(_, keep)| **keep)
                .map(|(v, _)| v * area)
                .sum())
        }
    }
}
