//! Geometry-aware crowd density estimation from a moving drone.
//!
//! Crowd density is expressed on the *head plane* (a plane parallel to the
//! ground at average head height) in people per square meter, where it is
//! free of perspective distortion. The crate provides:
//!
//! - [`geometry`]: camera model, image/head-plane homographies built from the
//!   drone's altitude and pitch, and per-pixel perspective scale maps.
//! - [`density`]: ground-truth head-plane densities from head annotations and
//!   conversion between head-plane and image-plane densities.
//! - [`consistency`]: block counts, people-conservation checks and the
//!   temporal, head-plane and composite losses.
//! - [`metrics`]: MAE, RMSE and MPAE with ROI support.
//! - [`crowdsim`]: a random-waypoint crowd simulator used as ground truth.
//! - [`dmap`], [`formats`]: the binary raster format and JSON schemas.
//! - [`predictor`]: the predictor plug-in interface and stub predictors.
//! - [`cli`]: the `geodensity` command-line tool.

pub mod cli;
pub mod consistency;
pub mod crowdsim;
pub mod density;
pub mod dmap;
pub mod formats;
pub mod geometry;
pub mod metrics;
pub mod predictor;

pub use consistency::{BlockCounts, BlockGrid};
pub use density::{AnnotationSet, DensityMap, HeadPlaneGrid, Mask, Plane, RasterGrid};
pub use geometry::{CameraIntrinsics, DronePose, Homography, Point2, ScaleMap};
