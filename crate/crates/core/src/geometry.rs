//! Camera model, drone-pose homographies and perspective scale maps.
//!
//! World frame: the head plane is `Z = 0`, the origin lies directly below the
//! drone, and the camera sits at `t = (0, 0, h)` in camera coordinates with
//! rotation `R_y(pi/2 + pitch)`. A pitch of `-pi/2` looks straight down
//! (nadir), pitches approaching `0` approach the horizontal.
//!
//! Homogeneous sign convention: homographies are normalized by a *positive*
//! factor, so for a homography built from a camera the third homogeneous
//! coordinate is positive exactly for points in front of the camera.

use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nalgebra::Point2;

/// Relative threshold under which a homogeneous `w` is treated as the line at
/// infinity.
pub const AT_INFINITY_EPS: f64 = 1e-12;

/// Largest accepted condition number of the plane-to-image matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Smallest accepted `|det|` of a max-abs normalized homography.
pub const MIN_NORMALIZED_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid drone pose: {0}")]
    InvalidPose(String),
    #[error("projection matrix is numerically singular (condition number {condition:.3e})")]
    SingularProjection { condition: f64 },
    #[error("homography is singular (normalized determinant {det:.3e})")]
    SingularHomography { det: f64 },
    #[error("point ({x}, {y}) maps to the line at infinity")]
    AtInfinity { x: f64, y: f64 },
    #[error("non-finite input point ({x}, {y})")]
    NonFinitePoint { x: f64, y: f64 },
}

/// Pinhole intrinsics. Pixel coordinates run over `[0, width) x [0, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Checks the invariants of a value obtained without `new` (e.g. from JSON).
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must be finite".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Drone altitude above the head plane (meters) and camera pitch (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DronePose {
    pub altitude: f64,
    pub pitch: f64,
}

impl DronePose {
    pub fn new(altitude: f64, pitch: f64) -> Result<Self, GeometryError> {
        let pose = Self { altitude, pitch };
        pose.validate()?;
        Ok(pose)
    }

    pub fn nadir(altitude: f64) -> Result<Self, GeometryError> {
        Self::new(altitude, -std::f64::consts::FRAC_PI_2)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.altitude.is_finite() && self.altitude > 0.0) {
            return Err(GeometryError::InvalidPose(format!(
                "altitude must be positive, got {}",
                self.altitude
            )));
        }
        if !(self.pitch >= -std::f64::consts::FRAC_PI_2 && self.pitch < 0.0) {
            return Err(GeometryError::InvalidPose(format!(
                "pitch must lie in [-pi/2, 0), got {}",
                self.pitch
            )));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_pitch(self.pitch)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.altitude)
    }
}

/// `R_y(pi/2 + pitch)`.
pub fn rotation_from_pitch(pitch: f64) -> Matrix3<f64> {
    let (s, c) = (std::f64::consts::FRAC_PI_2 + pitch).sin_cos();
    Matrix3::new(
        c, 0.0, s, //
        0.0, 1.0, 0.0, //
        -s, 0.0, c,
    )
}

/// Forward projection of a head-plane point `(x, y, 0)` into the image.
///
/// Returns the pixel position and the camera-frame depth, or `None` when the
/// point is not strictly in front of the camera.
pub fn project_head_point(
    k: &CameraIntrinsics,
    pose: &DronePose,
    head: &Point2<f64>,
) -> Option<(Point2<f64>, f64)> {
    let r = pose.rotation();
    let cam = r * Vector3::new(head.x, head.y, 0.0) + pose.translation();
    let depth = cam.z;
    if !(depth > 0.0) {
        return None;
    }
    let u = k.fx * cam.x / depth + k.cx;
    let v = k.fy * cam.y / depth + k.cy;
    Some((Point2::new(u, v), depth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    ImageToHead,
    HeadToImage,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::ImageToHead => Direction::HeadToImage,
            Direction::HeadToImage => Direction::ImageToHead,
        }
    }
}

/// A planar projective map, stored with its largest absolute entry equal to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
    direction: Direction,
}

impl Homography {
    pub fn new(m: Matrix3<f64>, direction: Direction) -> Result<Self, GeometryError> {
        let scale = m.amax();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeometryError::SingularHomography { det: 0.0 });
        }
        let m = m / scale;
        let det = m.determinant();
        if !(det.abs() >= MIN_NORMALIZED_DET) {
            return Err(GeometryError::SingularHomography { det });
        }
        Ok(Self { m, direction })
    }

    pub fn identity(direction: Direction) -> Self {
        Self {
            m: Matrix3::identity(),
            direction,
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn inverse(&self) -> Self {
        // `new` guarantees a well-conditioned determinant.
        let inv = self.m.try_inverse().expect("validated homography is invertible");
        let scale = inv.amax();
        Self {
            m: inv / scale,
            direction: self.direction.reversed(),
        }
    }

    /// Returns this map if it already points in `direction`, its inverse otherwise.
    pub fn oriented(&self, direction: Direction) -> Self {
        if self.direction == direction {
            *self
        } else {
            self.inverse()
        }
    }

    pub fn apply_homogeneous(&self, p: &Point2<f64>) -> Vector3<f64> {
        self.m * Vector3::new(p.x, p.y, 1.0)
    }

    /// Dehomogenized image of `p`.
    pub fn apply(&self, p: &Point2<f64>) -> Result<Point2<f64>, GeometryError> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(GeometryError::NonFinitePoint { x: p.x, y: p.y });
        }
        let q = self.apply_homogeneous(p);
        if q.z.abs() < AT_INFINITY_EPS * q.norm() || q.z == 0.0 {
            return Err(GeometryError::AtInfinity { x: p.x, y: p.y });
        }
        Ok(Point2::new(q.x / q.z, q.y / q.z))
    }

    /// Like [`apply`](Self::apply), but also rejects points whose homogeneous
    /// `w` is negative, i.e. points behind the camera for camera-derived maps.
    pub fn apply_in_front(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        let q = self.apply_homogeneous(p);
        if q.z > AT_INFINITY_EPS * q.norm() {
            Some(Point2::new(q.x / q.z, q.y / q.z))
        } else {
            None
        }
    }

    /// Analytic Jacobian of the dehomogenized map at `p`.
    pub fn jacobian(&self, p: &Point2<f64>) -> Result<Matrix2<f64>, GeometryError> {
        let q = self.apply_homogeneous(p);
        if q.z.abs() < AT_INFINITY_EPS * q.norm() || q.z == 0.0 {
            return Err(GeometryError::AtInfinity { x: p.x, y: p.y });
        }
        let m = &self.m;
        let (a, b, w) = (q.x, q.y, q.z);
        let w2 = w * w;
        Ok(Matrix2::new(
            (m[(0, 0)] * w - a * m[(2, 0)]) / w2,
            (m[(0, 1)] * w - a * m[(2, 1)]) / w2,
            (m[(1, 0)] * w - b * m[(2, 0)]) / w2,
            (m[(1, 1)] * w - b * m[(2, 1)]) / w2,
        ))
    }

    /// `|det J(p)|`: the factor by which a small area around `p` is scaled.
    pub fn local_scale(&self, p: &Point2<f64>) -> Result<f64, GeometryError> {
        Ok(self.jacobian(p)?.determinant().abs())
    }
}

/// `(K [R1 | R2 | t])^-1` for the given intrinsics and pose.
pub fn homography_image_to_head(
    k: &CameraIntrinsics,
    pose: &DronePose,
) -> Result<Homography, GeometryError> {
    k.validate()?;
    pose.validate()?;
    let r = pose.rotation();
    let t = pose.translation();
    let plane_to_image = k.matrix() * Matrix3::from_columns(&[r.column(0).into(), r.column(1).into(), t]);

    let sv = plane_to_image.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(GeometryError::SingularProjection { condition });
    }
    let inv = plane_to_image
        .try_inverse()
        .ok_or(GeometryError::SingularProjection { condition })?;
    Homography::new(inv, Direction::ImageToHead)
}

pub fn homography_head_to_image(
    k: &CameraIntrinsics,
    pose: &DronePose,
) -> Result<Homography, GeometryError> {
    Ok(homography_image_to_head(k, pose)?.inverse())
}

/// Per-pixel local scale, in head-plane m² per image px².
///
/// Pixels whose back-projected ray misses the head plane in front of the
/// camera carry the value 0 and are flagged invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl ScaleMap {
    /// Rebuilds a scale map from raw values; non-positive or non-finite
    /// entries are treated as invalid pixels.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Option<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return None;
        }
        let valid: Vec<bool> = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        let values = values
            .into_iter()
            .zip(&valid)
            .map(|(v, ok)| if *ok { v } else { 0.0 })
            .collect();
        Some(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// `(min, max)` over valid pixels.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .fold(None, |acc, (v, _)| match acc {
                None => Some((*v, *v)),
                Some((lo, hi)) => Some((lo.min(*v), hi.max(*v))),
            })
    }
}

/// Pixel-center coordinate of raster index `(x, y)`.
pub fn pixel_center(x: usize, y: usize) -> Point2<f64> {
    Point2::new(x as f64 + 0.5, y as f64 + 0.5)
}

/// Evaluates the local scale at every pixel center of a `K`-sized image.
///
/// A head-to-image homography is inverted first, so the result is always the
/// image-to-head area factor.
pub fn scale_map(h: &Homography, k: &CameraIntrinsics) -> ScaleMap {
    let h = h.oriented(Direction::ImageToHead);
    let (width, height) = (k.width as usize, k.height as usize);
    let m = *h.matrix();

    let mut values = vec![0.0; width * height];
    let mut valid = vec![false; width * height];
    values
        .par_chunks_mut(width)
        .zip(valid.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (row, row_valid))| {
            for x in 0..width {
                let p = pixel_center(x, y);
                let q = m * Vector3::new(p.x, p.y, 1.0);
                if !(q.z > AT_INFINITY_EPS * q.norm()) {
                    continue;
                }
                let scale = match h.local_scale(&p) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                if scale.is_finite() && scale > 0.0 {
                    row[x] = scale;
                    row_valid[x] = true;
                }
            }
        });
    ScaleMap {
        width,
        height,
        values,
        valid,
    }
}
