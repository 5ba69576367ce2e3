//! People-conservation check and temporal loss on block counts.
//!
//! `cargo run --example temporal_consistency`

use geodensity::consistency::{
    block_counts, composite_loss, conservation_check, temporal_loss, BlockGrid,
};
use geodensity::density::{rasterize_gaussians, RasterGrid};
use geodensity::Point2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = RasterGrid::new([0.0, 0.0], 0.1, 80, 60)?;
    let blocks = BlockGrid::new(grid, 1.0, &[])?;
    println!("{} x {} blocks, {} constrained", blocks.dims().0, blocks.dims().1, blocks.constrained_count());

    let sigma = 0.2;
    let walk = |x: f64| vec![Point2::new(x, 3.0), Point2::new(5.0, 2.5)];
    let g0 = rasterize_gaussians(&walk(2.5), sigma, &grid)?;
    let g1 = rasterize_gaussians(&walk(3.2), sigma, &grid)?;
    let g2 = rasterize_gaussians(&walk(3.9), sigma, &grid)?;
    println!("walking crowd: temporal loss {:.3e}", temporal_loss(&g0, &g1, &g2, &blocks)?);

    // the middle frame puts someone where nobody could have come from
    let teleport = rasterize_gaussians(&[Point2::new(3.2, 3.0), Point2::new(5.0, 2.5), Point2::new(6.5, 4.5)], sigma, &grid)?;
    let (c0, c1, c2) = (
        block_counts(&g0, &blocks)?,
        block_counts(&teleport, &blocks)?,
        block_counts(&g2, &blocks)?,
    );
    let violations = conservation_check(&c0, &c1, &c2, &blocks, 1e-3)?;
    println!("teleport: {} violating block(s)", violations.len());
    for v in &violations {
        println!("  block {:?}: excess {:.3} vs previous, {:.3} vs next", v.block, v.excess_prev, v.excess_next);
    }

    let loss = composite_loss([&g0, &teleport, &g2], &g1, &blocks, None)?;
    println!(
        "composite loss: head-plane {:.3e} + temporal {:.3e} = {:.3e}",
        loss.head_plane, loss.temporal, loss.total
    );
    Ok(())
}
