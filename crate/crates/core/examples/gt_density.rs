//! Ground-truth head-plane density from head annotations.
//!
//! `cargo run --example gt_density`

use geodensity::density::{head_plane_density, total_count, AnnotationSet, Mask, RasterGrid};
use geodensity::geometry::{homography_image_to_head, project_head_point, CameraIntrinsics, DronePose};
use geodensity::Point2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 480.0, 1280, 960)?;
    let pose = DronePose::new(30.0, -1.0)?;
    let h = homography_image_to_head(&k, &pose)?;

    // a small group and a lone walker, placed on the ground and rendered into the image
    let people = [
        Point2::new(-20.0, 0.0),
        Point2::new(-19.4, 0.5),
        Point2::new(-20.3, -0.6),
        Point2::new(-8.0, 5.0),
    ];
    let heads = people
        .iter()
        .map(|p| project_head_point(&k, &pose, p).map(|(uv, _)| uv).ok_or("person behind camera"))
        .collect::<Result<Vec<_>, _>>()?;
    let ann = AnnotationSet::new(0, heads);
    ann.validate_in_image(&k)?;

    let sigma = 0.5;
    let grid = RasterGrid::covering_image(&h, &k, 4.0 * sigma, 0.1)?;
    let g = head_plane_density(&ann, &h, sigma, &grid)?;
    let ((col, row), peak) = g.peak();
    println!("grid {}x{} cells of {} m, origin {:?}", grid.cols, grid.rows, grid.cell_size, grid.origin);
    println!("total count {:.4} for {} annotated heads", g.mass(), ann.count());
    let c = grid.cell_center(col, row);
    println!("peak {peak:.3} people/m^2 at ({:.2}, {:.2}) m", c.x, c.y);

    let group = Mask::from_fn(grid.cols, grid.rows, |c, r| (grid.cell_center(c, r) - people[0]).norm() < 3.0);
    println!("count within 3 m of the group: {:.4}", total_count(&g, Some(&group))?);
    Ok(())
}
