//! Counting and localization metrics over a batch of frames.
//!
//! Counts are ROI-restricted integrals of the density maps. MPAE sums the
//! absolute per-cell mass error inside the ROI of each frame and averages
//! over frames only; [`mpae_per_cell`] additionally divides each frame's sum
//! by its number of ROI cells.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{total_count, DensityMap, Mask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("evaluation batch is empty")]
    EmptyBatch,
    #[error("frame {frame}: {what}")]
    DimensionMismatch { frame: usize, what: String },
    #[error("frame {frame}: truth and prediction live on different planes")]
    PlaneMismatch { frame: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub truth: DensityMap,
    pub predicted: DensityMap,
    pub roi: Option<Mask>,
}

impl FramePair {
    pub fn new(truth: DensityMap, predicted: DensityMap, roi: Option<Mask>) -> Self {
        Self { truth, predicted, roi }
    }

    fn validate(&self, frame: usize) -> Result<(), MetricsError> {
        if self.truth.plane() != self.predicted.plane() {
            return Err(MetricsError::PlaneMismatch { frame });
        }
        if !self.truth.grid().same_geometry(self.predicted.grid()) {
            return Err(MetricsError::DimensionMismatch {
                frame,
                what: format!(
                    "truth grid {:?} differs from prediction grid {:?}",
                    self.truth.grid(),
                    self.predicted.grid()
                ),
            });
        }
        if let Some(roi) = &self.roi {
            if roi.dims() != self.truth.dims() {
                return Err(MetricsError::DimensionMismatch {
                    frame,
                    what: format!("ROI is {:?}, maps are {:?}", roi.dims(), self.truth.dims()),
                });
            }
        }
        Ok(())
    }

    fn in_roi(&self, i: usize) -> bool {
        self.roi.as_ref().is_none_or(|m| m.as_slice()[i])
    }

    /// `(true count, estimated count)` inside the ROI.
    pub fn counts(&self) -> (f64, f64) {
        let roi = self.roi.as_ref();
        // dims were checked in `validate`
        (
            total_count(&self.truth, roi).expect("validated ROI"),
            total_count(&self.predicted, roi).expect("validated ROI"),
        )
    }

    /// Sum of `|D - D_hat| * cell_area` over ROI cells.
    pub fn absolute_error_mass(&self) -> f64 {
        let area = self.truth.cell_area();
        self.truth
            .values()
            .iter()
            .zip(self.predicted.values())
            .enumerate()
            .filter(|(i, _)| self.in_roi(*i))
            .map(|(_, (t, p))| (t - p).abs() * area)
            .sum()
    }

    pub fn roi_cells(&self) -> usize {
        self.roi.as_ref().map_or(self.truth.values().len(), Mask::count)
    }
}

/// A validated, non-empty set of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationBatch {
    frames: Vec<FramePair>,
}

impl EvaluationBatch {
    pub fn new(frames: Vec<FramePair>) -> Result<Self, MetricsError> {
        if frames.is_empty() {
            return Err(MetricsError::EmptyBatch);
        }
        for (i, f) in frames.iter().enumerate() {
            f.validate(i)?;
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[FramePair] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Signed per-frame count errors `z_hat - z`.
    pub fn count_errors(&self) -> Vec<f64> {
        self.frames
            .iter()
            .map(|f| {
                let (z, z_hat) = f.counts();
                z_hat - z
            })
            .collect()
    }
}

pub fn mae(batch: &EvaluationBatch) -> f64 {
    let errors = batch.count_errors();
    errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64
}

pub fn rmse(batch: &EvaluationBatch) -> f64 {
    let errors = batch.count_errors();
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn mpae(batch: &EvaluationBatch) -> f64 {
    batch.frames.iter().map(FramePair::absolute_error_mass).sum::<f64>() / batch.len() as f64
}

/// MPAE with each frame's error sum divided by its ROI cell count.
pub fn mpae_per_cell(batch: &EvaluationBatch) -> f64 {
    batch
        .frames
        .iter()
        .map(|f| match f.roi_cells() {
            0 => 0.0,
            n => f.absolute_error_mass() / n as f64,
        })
        .sum::<f64>()
        / batch.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub mpae: f64,
    pub n_frames: usize,
}

pub fn evaluate(batch: &EvaluationBatch) -> MetricsReport {
    MetricsReport {
        mae: mae(batch),
        rmse: rmse(batch),
        mpae: mpae(batch),
        n_frames: batch.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Plane, RasterGrid};

    fn map(values: Vec<f64>) -> DensityMap {
        let n = values.len();
        DensityMap::new(Plane::Head, RasterGrid::image(n, 1), values).unwrap()
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert_eq!(EvaluationBatch::new(vec![]), Err(MetricsError::EmptyBatch));
    }

    #[test]
    fn two_frame_fixture() {
        let batch = EvaluationBatch::new(vec![
            FramePair::new(map(vec![5.0, 5.0]), map(vec![8.0, 5.0]), None),
            FramePair::new(map(vec![2.0, 2.0]), map(vec![2.0, 1.0]), None),
        ])
        .unwrap();
        assert_eq!(mae(&batch), 2.0);
        assert!((rmse(&batch) - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(mpae(&batch), 2.0);
    }

    #[test]
    fn canceling_errors_hide_from_mae_but_not_mpae() {
        let delta = 0.75;
        let batch = EvaluationBatch::new(vec![FramePair::new(
            map(vec![1.0, 1.0, 1.0, 1.0]),
            map(vec![1.0 + delta, 1.0 - delta, 1.0 + delta, 1.0 - delta]),
            None,
        )])
        .unwrap();
        assert_eq!(mae(&batch), 0.0);
        assert_eq!(mpae(&batch), 4.0 * delta);
        assert_eq!(mpae_per_cell(&batch), delta);
    }

    #[test]
    fn roi_dimension_checked() {
        let bad = FramePair::new(map(vec![1.0]), map(vec![1.0]), Some(Mask::full(2, 1)));
        assert!(matches!(
            EvaluationBatch::new(vec![bad]),
            Err(MetricsError::DimensionMismatch { .. })
        ));
        let other = FramePair::new(map(vec![1.0]), map(vec![1.0, 2.0]), None);
        assert!(EvaluationBatch::new(vec![other]).is_err());
    }

    #[test]
    fn roi_restricts_counts() {
        let roi = Mask::from_fn(3, 1, |i, _| i < 2);
        let batch = EvaluationBatch::new(vec![FramePair::new(
            map(vec![1.0, 1.0, 1.0]),
            map(vec![1.0, 1.5, 9.0]),
            Some(roi),
        )])
        .unwrap();
        assert_eq!(mae(&batch), 0.5);
        assert_eq!(mpae(&batch), 0.5);
    }
}
