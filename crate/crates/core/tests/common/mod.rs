//! Test oracles shared by the integration suites. Everything here is written
//! against the raw projection equations and deliberately avoids the library's
//! homography construction and Jacobian code.

#![allow(dead_code)]

use geodensity::geometry::{project_head_point, CameraIntrinsics, DronePose, Homography};
use geodensity::Point2;
use rand::Rng;

/// Solves a 3x3 linear system by Gaussian elimination with partial pivoting.
pub fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for c in row + 1..3 {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Head-plane point seen at pixel `(u, v)`: solves
/// `K (x R1 + y R2 + t) = lambda (u, v, 1)` for `(x, y, lambda)` with the
/// rotation written out by hand.
pub fn back_project(k: &CameraIntrinsics, pose: &DronePose, u: f64, v: f64) -> Option<(f64, f64, f64)> {
    let alpha = std::f64::consts::FRAC_PI_2 + pose.pitch;
    let (s, c) = alpha.sin_cos();
    // columns of R_y(alpha): R1 = (c, 0, -s), R2 = (0, 1, 0); t = (0, 0, h)
    let kr1 = [k.fx * c + k.cx * -s, k.cy * -s, -s];
    let kr2 = [0.0, k.fy, 0.0];
    let kt = [k.cx * pose.altitude, k.cy * pose.altitude, pose.altitude];
    let a = [
        [kr1[0], kr2[0], -u],
        [kr1[1], kr2[1], -v],
        [kr1[2], kr2[2], -1.0],
    ];
    let sol = solve3(a, [-kt[0], -kt[1], -kt[2]])?;
    (sol[2] > 0.0).then_some((sol[0], sol[1], sol[2]))
}

/// `|det J|` of `h` at `p` by central differences.
pub fn fd_local_scale(h: &Homography, p: &Point2<f64>, step: f64) -> f64 {
    let f = |x: f64, y: f64| h.apply(&Point2::new(x, y)).unwrap();
    let xp = f(p.x + step, p.y);
    let xm = f(p.x - step, p.y);
    let yp = f(p.x, p.y + step);
    let ym = f(p.x, p.y - step);
    let j00 = (xp.x - xm.x) / (2.0 * step);
    let j10 = (xp.y - xm.y) / (2.0 * step);
    let j01 = (yp.x - ym.x) / (2.0 * step);
    let j11 = (yp.y - ym.y) / (2.0 * step);
    (j00 * j11 - j01 * j10).abs()
}

/// Local area factor of the full back-projection by central differences of
/// the brute-force solver.
pub fn fd_back_projection_scale(k: &CameraIntrinsics, pose: &DronePose, u: f64, v: f64, step: f64) -> f64 {
    let f = |u: f64, v: f64| {
        let (x, y, _) = back_project(k, pose, u, v).unwrap();
        (x, y)
    };
    let xp = f(u + step, v);
    let xm = f(u - step, v);
    let yp = f(u, v + step);
    let ym = f(u, v - step);
    let j00 = (xp.0 - xm.0) / (2.0 * step);
    let j10 = (xp.1 - xm.1) / (2.0 * step);
    let j01 = (yp.0 - ym.0) / (2.0 * step);
    let j11 = (yp.1 - ym.1) / (2.0 * step);
    (j00 * j11 - j01 * j10).abs()
}

pub fn random_intrinsics(rng: &mut impl Rng) -> CameraIntrinsics {
    let width = rng.random_range(320..=1920u32);
    let height = rng.random_range(240..=1080u32);
    let f = rng.random_range(500.0..2000.0);
    CameraIntrinsics::new(
        f,
        f * rng.random_range(0.95..1.05),
        width as f64 / 2.0 + rng.random_range(-20.0..20.0),
        height as f64 / 2.0 + rng.random_range(-20.0..20.0),
        width,
        height,
    )
    .unwrap()
}

/// Random intrinsics and pose whose whole image lies below the horizon with
/// some room to spare.
pub fn random_camera(rng: &mut impl Rng) -> (CameraIntrinsics, DronePose) {
    loop {
        let k = random_intrinsics(rng);
        let pose = DronePose::new(
            rng.random_range(5.0..100.0),
            rng.random_range(-std::f64::consts::FRAC_PI_2..-0.3),
        )
        .unwrap();
        // horizon sits at u = cx - fx * cot(pi/2 + pitch)
        let alpha = std::f64::consts::FRAC_PI_2 + pose.pitch;
        let horizon_u = k.cx - k.fx * alpha.cos() / alpha.sin();
        if horizon_u < -0.25 * k.width as f64 {
            return (k, pose);
        }
    }
}

pub fn random_pixel(k: &CameraIntrinsics, rng: &mut impl Rng) -> Point2<f64> {
    Point2::new(
        rng.random_range(0.0..k.width as f64),
        rng.random_range(0.0..k.height as f64),
    )
}

/// True when the disc of `radius` around `p` projects entirely inside the image.
pub fn disc_visible(k: &CameraIntrinsics, pose: &DronePose, p: &Point2<f64>, radius: f64) -> bool {
    (0..16).all(|i| {
        let a = i as f64 * std::f64::consts::TAU / 16.0;
        let q = Point2::new(p.x + radius * a.cos(), p.y + radius * a.sin());
        project_head_point(k, pose, &q).is_some_and(|(uv, _)| k.contains(&uv))
    })
}

/// Random head-plane positions whose `radius` disc is fully in view.
pub fn visible_positions(
    k: &CameraIntrinsics,
    pose: &DronePose,
    n: usize,
    radius: f64,
    rng: &mut impl Rng,
) -> Vec<Point2<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        assert!(tries < 1_000_000, "could not place {n} people in view");
        let uv = random_pixel(k, rng);
        let Some((x, y, _)) = back_project(k, pose, uv.x, uv.y) else {
            continue;
        };
        let p = Point2::new(x, y);
        if disc_visible(k, pose, &p, radius) {
            out.push(p);
        }
    }
    out
}
