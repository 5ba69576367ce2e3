//! Pluggable head-plane density predictors.
//!
//! A predictor turns per-frame evidence (annotations or an existing density
//! map, plus the frame's scale map and homography) into a head-plane density.
//! The stubs here stand in for a learned model when exercising the pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::density::{
    head_plane_density, image_to_head_density, AnnotationSet, DensityError, DensityMap, HeadPlaneGrid, Plane,
};
use crate::geometry::{Homography, ScaleMap};

pub enum PredictorInput<'a> {
    Annotations(&'a AnnotationSet),
    Density(&'a DensityMap),
}

/// Frame geometry shared by every predictor.
pub struct FrameContext<'a> {
    pub homography: &'a Homography,
    pub scale: &'a ScaleMap,
    pub grid: &'a HeadPlaneGrid,
    pub sigma: f64,
}

pub trait Predictor {
    fn name(&self) -> &str;

    /// Output is always a non-negative head-plane map on `ctx.grid`.
    fn predict(&self, input: &PredictorInput<'_>, ctx: &FrameContext<'_>) -> Result<DensityMap, DensityError>;
}

/// Returns the rasterized ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, input: &PredictorInput<'_>, ctx: &FrameContext<'_>) -> Result<DensityMap, DensityError> {
        match input {
            PredictorInput::Annotations(a) => head_plane_density(a, ctx.homography, ctx.sigma, ctx.grid),
            PredictorInput::Density(d) => match d.plane() {
                Plane::Head => {
                    if !d.grid().same_geometry(ctx.grid) {
                        return Err(DensityError::DimensionMismatch {
                            expected: ctx.grid.dims(),
                            found: d.dims(),
                        });
                    }
                    Ok((*d).clone())
                }
                Plane::Image => image_to_head_density(d, ctx.homography, ctx.scale, ctx.grid),
            },
        }
    }
}

/// Ground truth plus seeded i.i.d. Gaussian noise per cell, clipped at zero.
#[derive(Debug, Clone, Copy)]
pub struct NoisyOraclePredictor {
    /// people/m²
    pub noise_std: f64,
    pub seed: u64,
}

impl Predictor for NoisyOraclePredictor {
    fn name(&self) -> &str {
        "noisy-oracle"
    }

    fn predict(&self, input: &PredictorInput<'_>, ctx: &FrameContext<'_>) -> Result<DensityMap, DensityError> {
        let truth = OraclePredictor.predict(input, ctx)?;
        if !(self.noise_std > 0.0) {
            return Ok(truth);
        }
        let normal = Normal::new(0.0, self.noise_std)
            .map_err(|e| DensityError::InvalidValues(format!("noise std {}: {e}", self.noise_std)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(truth.map_values(|_, v| v + normal.sample(&mut rng)))
    }
}

/// Total ground-truth mass spread evenly over the grid.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPredictor;

impl Predictor for UniformPredictor {
    fn name(&self) -> &str {
        "uniform"
    }

    fn predict(&self, input: &PredictorInput<'_>, ctx: &FrameContext<'_>) -> Result<DensityMap, DensityError> {
        let mass = OraclePredictor.predict(input, ctx)?.mass();
        let grid = *ctx.grid;
        let value = mass / (grid.len() as f64 * grid.cell_area());
        DensityMap::new(Plane::Head, grid, vec![value; grid.len()])
    }
}

/// Looks up one of the built-in predictors by name.
pub fn by_name(name: &str, noise_std: f64, seed: u64) -> Option<Box<dyn Predictor + Send + Sync>> {
    match name {
        "oracle" => Some(Box::new(OraclePredictor)),
        "noisy-oracle" => Some(Box::new(NoisyOraclePredictor { noise_std, seed })),
        "uniform" => Some(Box::new(UniformPredictor)),
        _ => None,
    }
}
