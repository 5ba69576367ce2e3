//! Per-pixel local scale for a nadir and an oblique camera.
//!
//! `cargo run --example scale_map`

use geodensity::geometry::{homography_image_to_head, pixel_center, scale_map, CameraIntrinsics, DronePose};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 480.0, 1280, 960)?;

    for (label, pose) in [
        ("nadir", DronePose::nadir(25.0)?),
        ("oblique (-45 deg)", DronePose::new(25.0, -std::f64::consts::FRAC_PI_4)?),
        ("shallow (-15 deg)", DronePose::new(25.0, -0.26)?),
    ] {
        let h = homography_image_to_head(&k, &pose)?;
        let m = scale_map(&h, &k);
        println!("{label}: altitude {} m, pitch {:.3} rad", pose.altitude, pose.pitch);
        match m.valid_range() {
            Some((lo, hi)) => println!(
                "  {} of {} pixels see the ground, M in [{lo:.3e}, {hi:.3e}] m^2/px",
                m.valid_count(),
                k.pixel_count()
            ),
            None => println!("  no pixel sees the ground"),
        }
        // scale changes along image x only; sample the middle row
        for x in [0, 320, 640, 960, 1279] {
            let p = pixel_center(x, 480);
            let ground = h.apply_in_front(&p);
            match ground {
                Some(q) => println!("  px ({x:4}, 480) -> ({:7.2}, {:6.2}) m, M = {:.3e}", q.x, q.y, m.get(x, 480)),
                None => println!("  px ({x:4}, 480) -> above the horizon"),
            }
        }
    }
    Ok(())
}
