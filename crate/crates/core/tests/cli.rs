use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geodensity::consistency::{composite_loss, BlockGrid, CompositeLoss};
use geodensity::density::{DensityMap, Plane, RasterGrid};
use geodensity::dmap::{decode, DmapFile};
use geodensity::formats::{write_dmap_file, write_json, BlockConfig, TelemetryRecord};
use geodensity::geometry::{homography_image_to_head, scale_map, CameraIntrinsics, DronePose};
use tempfile::TempDir;

fn geodensity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geodensity"))
        .args(args)
        .output()
        .expect("spawn geodensity")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0, 640, 480).unwrap()
}

fn telemetry(dir: &Path, pose: DronePose) -> PathBuf {
    let path = dir.join("telemetry.json");
    write_json(&path, &[TelemetryRecord::new(0, &pose, &camera())]).unwrap();
    path
}

fn write_annotations(dir: &Path, heads: &[[f64; 2]]) -> PathBuf {
    let path = dir.join("ann.json");
    std::fs::write(&path, serde_json::json!({ "frame": 0, "heads": heads }).to_string()).unwrap();
    path
}

fn read_map(path: &Path) -> DensityMap {
    decode(&std::fs::read(path).unwrap()).unwrap().to_density().unwrap()
}

#[test]
fn scalemap_output_rereads_exactly() {
    let dir = TempDir::new().unwrap();
    let pose = DronePose::new(20.0, -1.0).unwrap();
    let tel = telemetry(dir.path(), pose);
    let out = dir.path().join("m.dmap");
    let o = geodensity(&["scalemap", "--telemetry", s(&tel), "--frame", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let expected = scale_map(&homography_image_to_head(&camera(), &pose).unwrap(), &camera());
    assert_eq!(std::fs::read(&out).unwrap(), geodensity::dmap::encode(&DmapFile::from_scale_map(&expected)));
}

#[test]
fn nadir_scalemap_is_constant() {
    let dir = TempDir::new().unwrap();
    let tel = telemetry(dir.path(), DronePose::nadir(10.0).unwrap());
    let out = dir.path().join("m.dmap");
    assert_eq!(code(&geodensity(&["scalemap", "--telemetry", s(&tel), "--frame", "0", "--out", s(&out)])), 0);
    let m = decode(&std::fs::read(&out).unwrap()).unwrap();
    assert!(m.values.iter().all(|v| *v == m.values[0]));
    assert_eq!(m.values[0], 1e-4f32);
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let tel = telemetry(dir.path(), DronePose::nadir(10.0).unwrap());
    let out = dir.path().join("m.dmap");
    let o = geodensity(&["scalemap", "--telemetry", s(&tel), "--frame", "7", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = geodensity(&["scalemap", "--telemetry", s(&bad), "--frame", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));

    assert_eq!(code(&geodensity(&["frobnicate"])), 2);
    assert_eq!(code(&geodensity(&["--help"])), 0);

    let pairs = dir.path().join("pairs.json");
    std::fs::write(&pairs, r#"{"pairs": [{"truth": "nope.dmap", "pred": "nope.dmap"}]}"#).unwrap();
    let o = geodensity(&["eval", "--pairs", s(&pairs), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gtdensity_counts_heads_and_guards_the_grid() {
    let dir = TempDir::new().unwrap();
    let tel = telemetry(dir.path(), DronePose::nadir(20.0).unwrap());
    let ann = write_annotations(dir.path(), &[[100.0, 100.0], [320.0, 240.0], [500.0, 400.0]]);
    let out = dir.path().join("g.dmap");
    let o = geodensity(&["gtdensity", "--annotations", s(&ann), "--telemetry", s(&tel), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let g = read_map(&out);
    assert_eq!(g.plane(), Plane::Head);
    assert!((g.mass() - 3.0).abs() < 3e-3);

    // a small explicit grid that misses two of the heads
    let grid = dir.path().join("grid.json");
    write_json(&grid, &RasterGrid::new([-1.0, -1.0], 0.1, 20, 20).unwrap()).unwrap();
    let args = ["gtdensity", "--annotations", s(&ann), "--telemetry", s(&tel), "--grid", s(&grid), "--out", s(&out)];
    assert_eq!(code(&geodensity(&args)), 4);
    let mut expand = args.to_vec();
    expand.push("--expand-grid");
    assert_eq!(code(&geodensity(&expand)), 0);
    let g = read_map(&out);
    assert!((g.mass() - 3.0).abs() < 3e-3);
    assert!(g.grid().cols > 20 && g.grid().rows > 20);

    let empty = write_annotations(dir.path(), &[]);
    assert_eq!(code(&geodensity(&["gtdensity", "--annotations", s(&empty), "--telemetry", s(&tel), "--out", s(&out)])), 0);
    assert_eq!(read_map(&out).mass(), 0.0);
}

#[test]
fn convert_roundtrip_and_plane_checks() {
    let dir = TempDir::new().unwrap();
    let tel = telemetry(dir.path(), DronePose::new(15.0, -1.2).unwrap());
    let ann = write_annotations(dir.path(), &[[200.0, 150.0], [330.0, 260.0], [450.0, 300.0]]);
    let g = dir.path().join("g.dmap");
    let f = dir.path().join("f.dmap");
    let back = dir.path().join("b.dmap");
    let grid = dir.path().join("grid.json");
    assert_eq!(code(&geodensity(&["gtdensity", "--annotations", s(&ann), "--telemetry", s(&tel), "--out", s(&g)])), 0);
    write_json(&grid, read_map(&g).grid()).unwrap();
    let conv = |input: &Path, to: &str, out: &Path| {
        code(&geodensity(&[
            "convert", "--in", s(input), "--to", to, "--telemetry", s(&tel), "--frame", "0", "--grid", s(&grid), "--out", s(out),
        ]))
    };
    assert_eq!(conv(&g, "image", &f), 0);
    assert_eq!(conv(&f, "head", &back), 0);
    let (g, f, back) = (read_map(&g), read_map(&f), read_map(&back));
    assert_eq!(f.plane(), Plane::Image);
    assert!((f.mass() - g.mass()).abs() / g.mass() < 0.02);
    assert!((back.mass() - g.mass()).abs() / g.mass() < 0.02);

    // asking for the plane a map is already on is a tag error
    let f_path = dir.path().join("f.dmap");
    assert_eq!(conv(&f_path, "image", &dir.path().join("x.dmap")), 5);

    let zero = dir.path().join("z.dmap");
    write_dmap_file(&zero, &DmapFile::from_density(&DensityMap::zeros(Plane::Head, *g.grid()))).unwrap();
    assert_eq!(conv(&zero, "image", &dir.path().join("zi.dmap")), 0);
    assert_eq!(read_map(&dir.path().join("zi.dmap")).mass(), 0.0);
}

#[test]
fn corrupt_dmap_exits_5() {
    let dir = TempDir::new().unwrap();
    let tel = telemetry(dir.path(), DronePose::nadir(10.0).unwrap());
    let junk = dir.path().join("junk.dmap");
    std::fs::write(&junk, b"NOPE and some more bytes to pass the header length check").unwrap();
    let o = geodensity(&["convert", "--in", s(&junk), "--to", "image", "--telemetry", s(&tel), "--frame", "0", "--out", s(&dir.path().join("o.dmap"))]);
    assert_eq!(code(&o), 5);
}

fn triplet_fixture(dir: &Path) -> (Vec<PathBuf>, PathBuf, PathBuf) {
    let grid = RasterGrid::new([0.0, 0.0], 1.0, 3, 3).unwrap();
    let at = |i: usize, v: f64| {
        let mut values = vec![0.0; 9];
        values[i] = v;
        DensityMap::new(Plane::Head, grid, values).unwrap()
    };
    let maps = [at(0, 1.0), at(4, 3.0), at(5, 5.0)];
    let paths: Vec<PathBuf> = (0..3).map(|i| dir.join(format!("p{i}.dmap"))).collect();
    for (m, p) in maps.iter().zip(&paths) {
        write_dmap_file(p, &DmapFile::from_density(m)).unwrap();
    }
    let truth = dir.join("truth.dmap");
    write_dmap_file(&truth, &DmapFile::from_density(&at(4, 2.5))).unwrap();
    let blocks = dir.join("blocks.json");
    let bg = BlockGrid::with_block_cells(grid, 1, &[]).unwrap();
    write_json(&blocks, &BlockConfig::from_blocks(&bg)).unwrap();
    (paths, truth, blocks)
}

#[test]
fn check_reports_the_teleport() {
    let dir = TempDir::new().unwrap();
    let (p, _, blocks) = triplet_fixture(dir.path());
    let o = geodensity(&["check", "--pred", s(&p[0]), s(&p[1]), s(&p[2]), "--blocks", s(&blocks)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["block"], serde_json::json!([1, 1]));

    let o = geodensity(&["check", "--pred", s(&p[1]), s(&p[1]), s(&p[1]), "--blocks", s(&blocks)]);
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap(), serde_json::json!([]));
}

#[test]
fn loss_matches_the_library_bit_for_bit() {
    let dir = TempDir::new().unwrap();
    let (p, truth, blocks) = triplet_fixture(dir.path());
    let o = geodensity(&["loss", "--pred", s(&p[0]), s(&p[1]), s(&p[2]), "--truth", s(&truth), "--blocks", s(&blocks)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got: CompositeLoss = serde_json::from_slice(&o.stdout).unwrap();
    let maps: Vec<_> = p.iter().map(|x| read_map(x)).collect();
    let bg = BlockGrid::with_block_cells(*maps[0].grid(), 1, &[]).unwrap();
    let want = composite_loss([&maps[0], &maps[1], &maps[2]], &read_map(&truth), &bg, None).unwrap();
    assert_eq!(got.total.to_bits(), want.total.to_bits());
    assert_eq!(got.temporal, 2.0);

    let o = geodensity(&["loss", "--pred", s(&p[1]), s(&p[1]), s(&p[1]), "--truth", s(&p[1]), "--blocks", s(&blocks)]);
    let zero: CompositeLoss = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(zero.total, 0.0);

    // image-plane input is a tag error
    let img = dir.path().join("img.dmap");
    write_dmap_file(&img, &DmapFile::from_density(&DensityMap::zeros(Plane::Image, RasterGrid::image(3, 3)))).unwrap();
    let o = geodensity(&["loss", "--pred", s(&img), s(&p[1]), s(&p[2]), "--truth", s(&truth), "--blocks", s(&blocks)]);
    assert_eq!(code(&o), 5);
}

#[test]
fn eval_reproduces_the_hand_fixture() {
    let dir = TempDir::new().unwrap();
    let grid = RasterGrid::new([0.0, 0.0], 1.0, 2, 1).unwrap();
    let put = |name: &str, v: [f64; 2]| {
        write_dmap_file(&dir.path().join(name), &DmapFile::from_density(&DensityMap::new(Plane::Head, grid, v.to_vec()).unwrap())).unwrap();
    };
    put("t0.dmap", [4.0, 6.0]);
    put("p0.dmap", [5.0, 6.0]);
    put("t1.dmap", [15.0, 5.0]);
    put("p1.dmap", [15.0, 8.0]);
    let pairs = dir.path().join("pairs.json");
    std::fs::write(
        &pairs,
        r#"{"pairs": [{"truth": "t0.dmap", "pred": "p0.dmap"}, {"truth": "t1.dmap", "pred": "p1.dmap"}]}"#,
    )
    .unwrap();
    let out = dir.path().join("report.json");
    let o = geodensity(&["eval", "--pairs", s(&pairs), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: geodensity::metrics::MetricsReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((r.mae - 2.0).abs() < 1e-12);
    assert!((r.rmse - 5f64.sqrt()).abs() < 1e-12);
    assert_eq!(r.n_frames, 2);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("sim.json");
    std::fs::write(&config, r#"{"seed": 9, "persons": 30, "fps": 5, "duration_s": 1}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = geodensity(&["simulate", "--config", s(&config), "--out-dir", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let manifest: geodensity::formats::SimManifest =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.n_frames, 5);
    assert_eq!(manifest.frames.len(), 5);
    for name in ["manifest.json", "config.json", "telemetry.json", "grid.json", "blocks.json", "true_counts.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    for f in &manifest.frames {
        assert_eq!(std::fs::read(a.join(&f.annotations)).unwrap(), std::fs::read(b.join(&f.annotations)).unwrap());
    }

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"v_max": -1}"#).unwrap();
    assert_eq!(code(&geodensity(&["simulate", "--config", s(&bad), "--out-dir", s(&a)])), 2);
}

#[test]
fn predict_stubs_write_head_plane_maps() {
    let dir = TempDir::new().unwrap();
    let tel = telemetry(dir.path(), DronePose::nadir(20.0).unwrap());
    let ann = write_annotations(dir.path(), &[[300.0, 200.0], [350.0, 260.0]]);
    for p in ["oracle", "noisy-oracle", "uniform"] {
        let out = dir.path().join(format!("{p}.dmap"));
        let o = geodensity(&[
            "predict", "--predictor", p, "--noise-std", "0.05", "--annotations", s(&ann), "--telemetry", s(&tel), "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m = read_map(&out);
        assert_eq!(m.plane(), Plane::Head);
        assert!(m.values().iter().all(|v| *v >= 0.0));
    }
    let o = geodensity(&["predict", "--predictor", "csrnet", "--annotations", s(&ann), "--telemetry", s(&tel), "--out", "x"]);
    assert_eq!(code(&o), 2);
}
