//! MAE, RMSE and MPAE on a small batch of frames.
//!
//! `cargo run --example evaluate_metrics`

use geodensity::density::{rasterize_gaussians, Mask, RasterGrid};
use geodensity::metrics::{evaluate, EvaluationBatch, FramePair};
use geodensity::Point2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = RasterGrid::new([0.0, 0.0], 0.1, 100, 60)?;
    let truth_people = [Point2::new(2.0, 2.0), Point2::new(3.0, 4.0), Point2::new(7.0, 3.0)];
    let truth = rasterize_gaussians(&truth_people, 0.4, &grid)?;

    // right count, wrong place: MAE is blind to it, MPAE is not
    let shifted: Vec<_> = truth_people.iter().map(|p| Point2::new(p.x + 1.5, p.y)).collect();
    let misplaced = rasterize_gaussians(&shifted, 0.4, &grid)?;
    // right place, one person missing
    let missing = rasterize_gaussians(&truth_people[..2], 0.4, &grid)?;

    for (label, pred) in [("perfect", &truth), ("misplaced", &misplaced), ("one missing", &missing)] {
        let batch = EvaluationBatch::new(vec![FramePair::new(truth.clone(), pred.clone(), None)])?;
        let r = evaluate(&batch);
        println!("{label:12} MAE {:.3}  RMSE {:.3}  MPAE {:.3}", r.mae, r.rmse, r.mpae);
    }

    let right = Mask::from_fn(grid.cols, grid.rows, |c, _| c >= 50);
    let batch = EvaluationBatch::new(vec![FramePair::new(truth.clone(), missing, Some(right))])?;
    let r = evaluate(&batch);
    println!("right half only: MAE {:.3}  RMSE {:.3}  MPAE {:.3}", r.mae, r.rmse, r.mpae);
    Ok(())
}
