//! Whole pipeline in memory: simulate, rasterize ground truth, predict with
//! the stub predictors and score them.
//!
//! `cargo run --example end_to_end`

use geodensity::consistency::{block_counts, temporal_loss};
use geodensity::crowdsim::{simulate, SimConfig};
use geodensity::density::head_plane_density;
use geodensity::geometry::{homography_image_to_head, scale_map};
use geodensity::metrics::{evaluate, EvaluationBatch, FramePair};
use geodensity::predictor::{by_name, FrameContext, PredictorInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SimConfig {
        seed: 1,
        persons: 100,
        fps: 10.0,
        duration_s: 1.0,
        ..SimConfig::default()
    };
    let seq = simulate(&config)?;

    for (name, noise) in [("oracle", 0.0), ("noisy-oracle", 0.02), ("noisy-oracle", 0.1), ("uniform", 0.0)] {
        let model = by_name(name, noise, 7).ok_or("unknown predictor")?;
        let mut pairs = Vec::new();
        let mut preds = Vec::new();
        for fr in &seq.frames {
            let k = fr.telemetry.intrinsics()?;
            let h = homography_image_to_head(&k, &fr.telemetry.pose()?)?;
            let m = scale_map(&h, &k);
            let truth = head_plane_density(&fr.annotations, &h, config.sigma_m, &seq.grid)?;
            let ctx = FrameContext {
                homography: &h,
                scale: &m,
                grid: &seq.grid,
                sigma: config.sigma_m,
            };
            let pred = model.predict(&PredictorInput::Annotations(&fr.annotations), &ctx)?;
            preds.push(pred.clone());
            pairs.push(FramePair::new(truth, pred, None));
        }
        let r = evaluate(&EvaluationBatch::new(pairs)?);
        let mut worst_temporal: f64 = 0.0;
        for w in preds.windows(3) {
            worst_temporal = worst_temporal.max(temporal_loss(&w[0], &w[1], &w[2], &seq.blocks)?);
        }
        let mid = block_counts(&preds[preds.len() / 2], &seq.blocks)?.total();
        println!(
            "{name:12} std {noise:<5} MAE {:7.3}  RMSE {:7.3}  MPAE {:7.3}  temporal {:.2e}  mid-frame count {mid:.1}",
            r.mae, r.rmse, r.mpae, worst_temporal
        );
    }
    Ok(())
}
