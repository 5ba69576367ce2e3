//! Moving a density between the head plane and the image plane.
//!
//! `cargo run --example plane_conversion`

use geodensity::density::{head_to_image_density, image_to_head_density, rasterize_gaussians, RasterGrid};
use geodensity::geometry::{homography_image_to_head, project_head_point, scale_map, CameraIntrinsics, DronePose};
use geodensity::Point2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 480.0, 1280, 960)?;
    let pose = DronePose::new(20.0, -std::f64::consts::FRAC_PI_4)?;
    let h = homography_image_to_head(&k, &pose)?;
    let m = scale_map(&h, &k);

    // identical five-person clusters near and far from the camera
    let layout = [(0.0, 0.0), (0.6, 0.2), (-0.5, 0.4), (0.1, -0.7), (-0.3, -0.3)];
    let near = Point2::new(-14.0, 0.0);
    let far = Point2::new(-30.0, 0.0);
    let people: Vec<_> = [near, far]
        .iter()
        .flat_map(|c| layout.iter().map(move |(dx, dy)| Point2::new(c.x + dx, c.y + dy)))
        .collect();
    let grid = RasterGrid::covering_points(&people, 3.0, 0.1)?;
    let g = rasterize_gaussians(&people, 0.5, &grid)?;

    let f = head_to_image_density(&g, &h, &m)?;
    let back = image_to_head_density(&f, &h, &m, &grid)?;
    println!("head-plane mass  {:.4}", g.mass());
    println!("image-plane mass {:.4}", f.mass());
    println!("roundtrip mass   {:.4}", back.mass());

    for (label, c) in [("near", near), ("far", far)] {
        let (px, depth) = project_head_point(&k, &pose, &c).ok_or("cluster behind camera")?;
        let (x, y) = (px.x as usize, px.y as usize);
        println!(
            "{label}: depth {depth:.1} m, pixel ({x}, {y}), M {:.3e}, head density {:.3}, image density {:.3e}",
            m.get(x, y),
            g.sample_bilinear(&c),
            f.get(x, y)
        );
    }
    Ok(())
}
