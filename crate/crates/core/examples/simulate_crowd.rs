//! Simulated crowd filmed by a hovering drone, with exact per-block counts.
//!
//! `cargo run --example simulate_crowd`

use geodensity::consistency::conservation_check;
use geodensity::crowdsim::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SimConfig {
        seed: 42,
        persons: 120,
        duration_s: 4.0,
        ..SimConfig::default()
    };
    let seq = simulate(&config)?;
    let (bx, by) = seq.blocks.dims();
    println!(
        "{} frames at {} Hz, {} people, grid {}x{} cells, {bx}x{by} blocks of {} m",
        seq.frames.len(),
        config.fps,
        config.persons,
        seq.grid.cols,
        seq.grid.rows,
        seq.blocks.block_side_m()
    );
    for fr in seq.frames.iter().step_by(25) {
        println!(
            "t = {:4.1} s  altitude {:5.2} m  pitch {:6.3} rad  {} heads in view",
            fr.time,
            fr.true_pose.altitude,
            fr.true_pose.pitch,
            fr.annotations.count()
        );
    }

    let mut violations = 0;
    for w in seq.frames.windows(3) {
        violations += conservation_check(&w[0].true_counts, &w[1].true_counts, &w[2].true_counts, &seq.blocks, 0.0)?.len();
    }
    println!("conservation violations on true counts: {violations}");
    Ok(())
}
