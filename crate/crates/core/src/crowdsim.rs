//! Synthetic crowd simulator.
//!
//! People walk on the head plane with a random-waypoint model whose speed is
//! clamped at `v_max`, so no one moves more than `v_max * dt` per step. A
//! hovering drone (fixed ground position, altitude and pitch varying over
//! time) films the scene; each frame yields head annotations, a telemetry
//! record, and exact per-block counts computed from true positions.

use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{counts_from_points, BlockCounts, BlockGrid, BlockIndex};
use crate::density::{AnnotationSet, HeadPlaneGrid, RasterGrid, DEFAULT_CELL_M, DEFAULT_SIGMA_M, TRUNCATION_SIGMAS};
use crate::formats::TelemetryRecord;
use crate::geometry::{project_head_point, CameraIntrinsics, DronePose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
}

/// Axis-aligned rectangle on the head plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min.iter().chain(&self.max).all(|v| v.is_finite())
            && self.max[0] > self.min[0]
            && self.max[1] > self.min[1]
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    pub fn clamp(&self, p: Point2<f64>) -> Point2<f64> {
        Point2::new(p.x.clamp(self.min[0], self.max[0]), p.y.clamp(self.min[1], self.max[1]))
    }

    pub fn corners(&self) -> [Point2<f64>; 4] {
        [
            Point2::new(self.min[0], self.min[1]),
            Point2::new(self.max[0], self.min[1]),
            Point2::new(self.max[0], self.max[1]),
            Point2::new(self.min[0], self.max[1]),
        ]
    }

    fn sample(&self, rng: &mut impl Rng) -> Point2<f64> {
        Point2::new(
            rng.random_range(self.min[0]..=self.max[0]),
            rng.random_range(self.min[1]..=self.max[1]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Person {
    pub position: Point2<f64>,
    pub velocity: Vector2<f64>,
    pub waypoint: Point2<f64>,
}

/// World state of the walkers. Stepping is deterministic given the seed.
#[derive(Debug, Clone)]
pub struct CrowdState {
    pub time: f64,
    pub persons: Vec<Person>,
    pub world: Rect,
    pub v_max: f64,
    /// New walking speeds are drawn from `[min_speed_frac, 1] * v_max`.
    pub min_speed_frac: f64,
    rng: ChaCha8Rng,
}

impl CrowdState {
    pub fn new(world: Rect, v_max: f64, min_speed_frac: f64, seed: u64) -> Self {
        Self {
            time: 0.0,
            persons: Vec::new(),
            world,
            v_max,
            min_speed_frac: min_speed_frac.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Adds `n` people with uniform random positions and waypoints.
    pub fn spawn(&mut self, n: usize) {
        for _ in 0..n {
            let position = self.world.sample(&mut self.rng);
            let waypoint = self.world.sample(&mut self.rng);
            let speed = self.draw_speed();
            let velocity = heading(position, waypoint) * speed;
            self.persons.push(Person {
                position,
                velocity,
                waypoint,
            });
        }
    }

    pub fn positions(&self) -> Vec<Point2<f64>> {
        self.persons.iter().map(|p| p.position).collect()
    }

    fn draw_speed(&mut self) -> f64 {
        if self.v_max <= 0.0 {
            return 0.0;
        }
        let lo = self.min_speed_frac * self.v_max;
        if lo >= self.v_max {
            self.v_max
        } else {
            self.rng.random_range(lo..=self.v_max)
        }
    }

    /// Advances every walker by `dt` seconds toward its waypoint, stopping
    /// exactly on arrival and then drawing a new waypoint and speed.
    pub fn step(mut self, dt: f64) -> Self {
        self.advance(dt);
        self
    }

    pub fn advance(&mut self, dt: f64) {
        let v_max = self.v_max.max(0.0);
        for i in 0..self.persons.len() {
            let person = self.persons[i];
            let speed = person.velocity.norm().min(v_max);
            let reach = speed * dt;
            if !(reach > 0.0) {
                continue;
            }
            let to = person.waypoint - person.position;
            let dist = to.norm();
            if dist <= reach {
                let waypoint = self.world.sample(&mut self.rng);
                let new_speed = self.draw_speed();
                let p = &mut self.persons[i];
                p.position = person.waypoint;
                p.waypoint = waypoint;
                p.velocity = heading(p.position, waypoint) * new_speed;
            } else {
                let dir = to / dist;
                let p = &mut self.persons[i];
                p.position = self.world.clamp(person.position + dir * reach);
                p.velocity = dir * speed;
            }
        }
        self.time += dt;
    }
}

fn heading(from: Point2<f64>, to: Point2<f64>) -> Vector2<f64> {
    let d = to - from;
    let n = d.norm();
    if n > 0.0 {
        d / n
    } else {
        Vector2::new(1.0, 0.0)
    }
}

/// `base + amplitude * sin(2 pi t / period + phase)`; constant when the
/// period is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub base: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub period_s: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl Waveform {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            amplitude: 0.0,
            period_s: 0.0,
            phase_rad: 0.0,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        if self.period_s > 0.0 && self.amplitude != 0.0 {
            self.base + self.amplitude * (std::f64::consts::TAU * t / self.period_s + self.phase_rad).sin()
        } else {
            self.base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightPath {
    pub altitude_m: Waveform,
    pub pitch_rad: Waveform,
}

impl FlightPath {
    pub fn pose_at(&self, t: f64) -> Result<DronePose, SimError> {
        DronePose::new(self.altitude_m.at(t), self.pitch_rad.at(t))
            .map_err(|e| SimError::ConfigInvalid(format!("flight path at t={t:.3}s: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryNoise {
    #[serde(default)]
    pub altitude_std_m: f64,
    #[serde(default)]
    pub pitch_std_rad: f64,
}

impl TelemetryNoise {
    pub fn is_zero(&self) -> bool {
        self.altitude_std_m == 0.0 && self.pitch_std_rad == 0.0
    }

    /// Adds zero-mean Gaussian noise to a pose, keeping it physically valid.
    pub fn perturb(&self, pose: &DronePose, rng: &mut impl Rng) -> DronePose {
        let mut draw = |std: f64| match Normal::new(0.0, std) {
            Ok(n) if std > 0.0 => n.sample(rng),
            _ => 0.0,
        };
        let altitude = (pose.altitude + draw(self.altitude_std_m)).max(1e-3);
        let pitch = (pose.pitch + draw(self.pitch_std_rad)).clamp(-std::f64::consts::FRAC_PI_2, -1e-3);
        DronePose { altitude, pitch }
    }
}

fn default_seed() -> u64 {
    0
}
fn default_persons() -> usize {
    100
}
fn default_v_max() -> f64 {
    1.5
}
fn default_fps() -> f64 {
    25.0
}
fn default_duration() -> f64 {
    40.0
}
fn default_min_speed_frac() -> f64 {
    0.5
}
fn default_sigma() -> f64 {
    DEFAULT_SIGMA_M
}
fn default_cell() -> f64 {
    DEFAULT_CELL_M
}
fn default_block() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_world() -> Rect {
    Rect::new([-20.0, -7.0], [8.0, 7.0])
}
fn default_flight() -> FlightPath {
    FlightPath {
        altitude_m: Waveform {
            base: 25.0,
            amplitude: 1.5,
            period_s: 20.0,
            phase_rad: 0.0,
        },
        pitch_rad: Waveform {
            base: -std::f64::consts::FRAC_PI_3,
            amplitude: 0.05,
            period_s: 15.0,
            phase_rad: 0.0,
        },
    }
}
fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 1000.0,
        fy: 1000.0,
        cx: 640.0,
        cy: 480.0,
        width: 1280,
        height: 960,
    }
}

/// Simulation parameters. Every field has a default, so `{}` is a valid
/// JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_persons")]
    pub persons: usize,
    /// m/s
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    /// Hz
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_min_speed_frac")]
    pub min_speed_frac: f64,
    #[serde(default = "default_world")]
    pub world: Rect,
    #[serde(default = "default_flight")]
    pub flight: FlightPath,
    #[serde(default)]
    pub telemetry_noise: TelemetryNoise,
    #[serde(default = "default_intrinsics")]
    pub intrinsics: CameraIntrinsics,
    /// Kernel sigma the ground-truth grid margin is sized for.
    #[serde(default = "default_sigma")]
    pub sigma_m: f64,
    #[serde(default = "default_cell")]
    pub cell_m: f64,
    #[serde(default = "default_block")]
    pub block_m: f64,
    #[serde(default)]
    pub exempt: Vec<[usize; 2]>,
    /// Reject configs where part of the world leaves the image at some frame.
    #[serde(default = "default_true")]
    pub require_full_visibility: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SimConfig {
    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round().max(0.0) as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::ConfigInvalid(msg));
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(0.0..=1.0).contains(&self.min_speed_frac) {
            return bad(format!("min_speed_frac must lie in [0, 1], got {}", self.min_speed_frac));
        }
        if !self.world.is_valid() {
            return bad(format!("world rectangle {:?} is empty", self.world));
        }
        if !(self.sigma_m.is_finite() && self.sigma_m > 0.0) {
            return bad(format!("sigma_m must be positive, got {}", self.sigma_m));
        }
        self.intrinsics
            .validate()
            .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        let noise = &self.telemetry_noise;
        if !(noise.altitude_std_m >= 0.0 && noise.pitch_std_rad >= 0.0) {
            return bad("telemetry noise std must be non-negative".into());
        }
        self.block_grid()?;
        Ok(())
    }

    /// Head-plane raster: the world plus a 4 sigma margin, padded to whole blocks.
    pub fn grid(&self) -> Result<HeadPlaneGrid, SimError> {
        let cells = self.block_m / self.cell_m;
        if !(cells.is_finite() && cells >= 1.0 && (cells - cells.round()).abs() < 1e-6) {
            return Err(SimError::ConfigInvalid(format!(
                "block_m {} must be a whole number of {} m cells",
                self.block_m, self.cell_m
            )));
        }
        let base = RasterGrid::covering_points(&self.world.corners(), TRUNCATION_SIGMAS * self.sigma_m, self.cell_m)
            .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        Ok(base.padded_to_multiple(cells.round() as usize))
    }

    pub fn block_grid(&self) -> Result<BlockGrid, SimError> {
        let exempt: Vec<BlockIndex> = self.exempt.iter().map(|b| (b[0], b[1])).collect();
        BlockGrid::new(self.grid()?, self.block_m, &exempt).map_err(|e| SimError::ConfigInvalid(e.to_string()))
    }
}

/// Head annotations and a noise-free telemetry record for one frame. People
/// behind the camera or outside the image are simply absent.
pub fn render_frame(
    state_positions: &[Point2<f64>],
    frame: i64,
    pose: &DronePose,
    k: &CameraIntrinsics,
) -> (AnnotationSet, TelemetryRecord) {
    let heads = state_positions
        .iter()
        .filter_map(|p| project_head_point(k, pose, p))
        .map(|(uv, _)| uv)
        .filter(|uv| k.contains(uv))
        .collect();
    (
        AnnotationSet::new(frame, heads),
        TelemetryRecord::new(frame, pose, k),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub frame: usize,
    pub time: f64,
    pub positions: Vec<Point2<f64>>,
    pub true_pose: DronePose,
    pub annotations: AnnotationSet,
    pub telemetry: TelemetryRecord,
    pub true_counts: BlockCounts,
}

#[derive(Debug, Clone)]
pub struct SimSequence {
    pub config: SimConfig,
    pub grid: HeadPlaneGrid,
    pub blocks: BlockGrid,
    pub frames: Vec<SimFrame>,
}

/// Runs the full simulation. Identical configs give identical sequences.
pub fn simulate(config: &SimConfig) -> Result<SimSequence, SimError> {
    config.validate()?;
    let blocks = config.block_grid()?;
    let grid = *blocks.grid();
    let n_frames = config.frame_count();
    let dt = config.dt();

    let poses = (0..n_frames)
        .map(|f| config.flight.pose_at(f as f64 * dt))
        .collect::<Result<Vec<_>, _>>()?;
    if config.require_full_visibility {
        for (f, pose) in poses.iter().enumerate() {
            for c in config.world.corners() {
                let visible = project_head_point(&config.intrinsics, pose, &c).is_some_and(|(uv, _)| config.intrinsics.contains(&uv));
                if !visible {
                    return Err(SimError::ConfigInvalid(format!(
                        "world corner ({}, {}) leaves the image at frame {f}",
                        c.x, c.y
                    )));
                }
            }
        }
    }

    let mut state = CrowdState::new(config.world, config.v_max, config.min_speed_frac, config.seed);
    state.spawn(config.persons);
    let mut trajectory = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        if f > 0 {
            state.advance(dt);
        }
        trajectory.push(state.positions());
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7E1E_3E72_u64);
    let reported: Vec<DronePose> = poses
        .iter()
        .map(|p| config.telemetry_noise.perturb(p, &mut noise_rng))
        .collect();

    let frames = trajectory
        .into_par_iter()
        .enumerate()
        .map(|(f, positions)| {
            let time = f as f64 * dt;
            let (annotations, _) = render_frame(&positions, f as i64, &poses[f], &config.intrinsics);
            let telemetry = TelemetryRecord::new(f as i64, &reported[f], &config.intrinsics);
            let true_counts = counts_from_points(&positions, &blocks, time);
            SimFrame {
                frame: f,
                time,
                positions,
                true_pose: poses[f],
                annotations,
                telemetry,
                true_counts,
            }
        })
        .collect();

    Ok(SimSequence {
        config: config.clone(),
        grid,
        blocks,
        frames,
    })
}
