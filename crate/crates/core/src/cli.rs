//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 geometry error, 4 domain error,
//! 5 format or plane-tag error. Diagnostics go to stderr; stdout only carries
//! machine-readable results (`check`, `loss`).

use std::ffi::OsString;
use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::consistency::{
    block_counts, composite_loss, conservation_check, default_slack, BlockGrid, ConsistencyError,
};
use crate::crowdsim::{simulate, SimConfig, SimError};
use crate::density::{
    head_plane_density, head_to_image_density, image_to_head_density, DensityError, DensityMap, HeadPlaneGrid,
    Mask, Plane, RasterGrid, DEFAULT_CELL_M, DEFAULT_SIGMA_M, TRUNCATION_SIGMAS,
};
use crate::dmap::DmapFile;
use crate::formats::{
    read_annotations, read_dmap_file, read_grid, read_json, read_telemetry, write_dmap_file, write_json,
    write_simulation, BlockConfig, EvalManifest, FormatError, TelemetryRecord,
};
use crate::geometry::{homography_image_to_head, scale_map, CameraIntrinsics, GeometryError, Homography};
use crate::metrics::{evaluate, EvaluationBatch, FramePair, MetricsError};
use crate::predictor::{self, FrameContext, PredictorInput};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GEODENSITY_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_GEOMETRY: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        let code = match e {
            FormatError::Dmap { .. } => EXIT_FORMAT,
            _ => EXIT_INPUT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        let code = match e {
            GeometryError::InvalidIntrinsics(_) | GeometryError::InvalidPose(_) | GeometryError::NonFinitePoint { .. } => {
                EXIT_INPUT
            }
            _ => EXIT_GEOMETRY,
        };
        Self::new(code, e.to_string())
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        let code = match &e {
            DensityError::Geometry(g) => return g.clone().into(),
            DensityError::HeadOutsideGrid { .. } | DensityError::AnnotationOutsideImage { .. } => EXIT_DOMAIN,
            DensityError::HeadNotOnPlane { .. } | DensityError::FootprintUnbounded => EXIT_GEOMETRY,
            DensityError::PlaneMismatch { .. }
            | DensityError::DimensionMismatch { .. }
            | DensityError::InvalidValues(_) => EXIT_FORMAT,
            DensityError::InvalidSigma(_) | DensityError::InvalidGrid(_) => EXIT_INPUT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ConsistencyError> for CliError {
    fn from(e: ConsistencyError) -> Self {
        let code = match e {
            ConsistencyError::PlaneMismatch(_) | ConsistencyError::GridMismatch => EXIT_FORMAT,
            _ => EXIT_DOMAIN,
        };
        Self::new(code, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let code = match e {
            MetricsError::EmptyBatch => EXIT_INPUT,
            _ => EXIT_FORMAT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::new(EXIT_INPUT, e.to_string())
    }
}

impl From<crate::dmap::DmapError> for CliError {
    fn from(e: crate::dmap::DmapError) -> Self {
        match e {
            crate::dmap::DmapError::Density(d) => d.into(),
            other => Self::new(EXIT_FORMAT, other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "geodensity", version, about = "Geometry-aware crowd density toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetPlane {
    Image,
    Head,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the perspective scale map of one telemetry frame.
    Scalemap {
        #[arg(long)]
        telemetry: PathBuf,
        #[arg(long)]
        frame: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rasterize ground-truth head-plane density from head annotations.
    Gtdensity {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        telemetry: PathBuf,
        /// Kernel standard deviation, meters.
        #[arg(long, default_value_t = DEFAULT_SIGMA_M)]
        sigma: f64,
        /// Head-plane cell size, meters.
        #[arg(long, default_value_t = DEFAULT_CELL_M)]
        cell: f64,
        /// Head-plane grid JSON; defaults to the image footprint plus 4 sigma.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Grow the grid to cover heads outside it instead of failing.
        #[arg(long)]
        expand_grid: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a density map between the head plane and the image plane.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        to: TargetPlane,
        #[arg(long)]
        telemetry: PathBuf,
        #[arg(long)]
        frame: i64,
        /// Target head-plane grid JSON (`--to head` only).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Cell size, meters, of the default footprint grid (`--to head` only).
        #[arg(long, default_value_t = DEFAULT_CELL_M)]
        cell: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in predictor on one frame.
    Predict {
        #[arg(long, default_value = "oracle")]
        predictor: String,
        #[arg(long, conflicts_with = "density")]
        annotations: Option<PathBuf>,
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long)]
        telemetry: PathBuf,
        /// Telemetry frame; defaults to the annotation frame.
        #[arg(long)]
        frame: Option<i64>,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SIGMA_M)]
        sigma: f64,
        #[arg(long, default_value_t = DEFAULT_CELL_M)]
        cell: f64,
        /// Per-cell noise std for `noisy-oracle`, people/m².
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report people-conservation violations over a triplet of head-plane maps.
    Check {
        #[arg(long, num_args = 3, required = true)]
        pred: Vec<PathBuf>,
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Composite loss: head-plane MSE on the middle frame plus temporal loss.
    Loss {
        #[arg(long, num_args = 3, required = true)]
        pred: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        roi: Option<PathBuf>,
    },
    /// MAE, RMSE and MPAE over a manifest of truth/prediction pairs.
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        roi: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a crowd filmed by a hovering drone.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match thread_cap() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(CliError::new(EXIT_INPUT, format!("thread pool: {e}"))),
        },
        None => execute(cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("geodensity: {e}");
            e.code
        }
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Scalemap { telemetry, frame, out } => cmd_scalemap(&telemetry, frame, &out),
        Command::Gtdensity {
            annotations,
            telemetry,
            sigma,
            cell,
            grid,
            expand_grid,
            out,
        } => cmd_gtdensity(&annotations, &telemetry, sigma, cell, grid.as_deref(), expand_grid, &out),
        Command::Convert {
            input,
            to,
            telemetry,
            frame,
            grid,
            cell,
            out,
        } => cmd_convert(&input, to, &telemetry, frame, grid.as_deref(), cell, &out),
        Command::Predict {
            predictor,
            annotations,
            density,
            telemetry,
            frame,
            grid,
            sigma,
            cell,
            noise_std,
            seed,
            out,
        } => cmd_predict(PredictArgs {
            predictor: &predictor,
            annotations: annotations.as_deref(),
            density: density.as_deref(),
            telemetry: &telemetry,
            frame,
            grid: grid.as_deref(),
            sigma,
            cell,
            noise_std,
            seed,
            out: &out,
        }),
        Command::Check { pred, blocks, slack } => cmd_check(&pred, &blocks, slack),
        Command::Loss {
            pred,
            truth,
            blocks,
            roi,
        } => cmd_loss(&pred, &truth, &blocks, roi.as_deref()),
        Command::Eval { pairs, roi, out } => cmd_eval(&pairs, roi.as_deref(), &out),
        Command::Simulate { config, out_dir } => cmd_simulate(config.as_deref(), &out_dir),
    }
}

struct FrameGeometry {
    k: CameraIntrinsics,
    h: Homography,
}

fn frame_geometry(telemetry: &Path, frame: i64) -> Result<FrameGeometry, CliError> {
    let records = read_telemetry(telemetry)?;
    let record: &TelemetryRecord = records.iter().find(|r| r.frame == frame).ok_or_else(|| {
        CliError::new(
            EXIT_INPUT,
            format!("{}: no telemetry for frame {frame}", telemetry.display()),
        )
    })?;
    let k = record.intrinsics()?;
    let pose = record.pose()?;
    let h = homography_image_to_head(&k, &pose)?;
    Ok(FrameGeometry { k, h })
}

fn read_density(path: &Path) -> Result<DensityMap, CliError> {
    Ok(read_dmap_file(path)?.to_density()?)
}

fn write_density(path: &Path, map: &DensityMap) -> Result<(), CliError> {
    Ok(write_dmap_file(path, &DmapFile::from_density(map))?)
}

fn read_roi(path: &Path) -> Result<Mask, CliError> {
    Ok(Mask::from_nonzero(&read_density(path)?))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value).expect("serializable value");
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{text}").map_err(|e| CliError::new(EXIT_INPUT, format!("stdout: {e}")))
}

fn cmd_scalemap(telemetry: &Path, frame: i64, out: &Path) -> Result<(), CliError> {
    let g = frame_geometry(telemetry, frame)?;
    let m = scale_map(&g.h, &g.k);
    write_dmap_file(out, &DmapFile::from_scale_map(&m))?;
    Ok(())
}

/// Default head-plane grid for a frame: the image footprint, or the mapped
/// heads when the horizon is in view, padded by the kernel support.
fn default_grid(g: &FrameGeometry, heads: &[nalgebra::Point2<f64>], sigma: f64, cell: f64) -> Result<HeadPlaneGrid, CliError> {
    let margin = TRUNCATION_SIGMAS * sigma;
    match RasterGrid::covering_image(&g.h, &g.k, margin, cell) {
        Ok(grid) => Ok(grid),
        Err(DensityError::FootprintUnbounded) if !heads.is_empty() => {
            Ok(RasterGrid::covering_points(heads, margin, cell)?)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_gtdensity(
    annotations: &Path,
    telemetry: &Path,
    sigma: f64,
    cell: f64,
    grid: Option<&Path>,
    expand_grid: bool,
    out: &Path,
) -> Result<(), CliError> {
    let ann = read_annotations(annotations)?;
    let g = frame_geometry(telemetry, ann.frame)?;
    let heads = ann.to_head_plane(&g.h)?;
    let mut grid = match grid {
        Some(p) => read_grid(p)?,
        None => default_grid(&g, &heads, sigma, cell)?,
    };
    if expand_grid && heads.iter().any(|p| !grid.contains_point(p)) {
        let outliers = heads.iter().filter(|p| !grid.contains_point(p)).count();
        grid = grid.expanded_to_cover(&heads, TRUNCATION_SIGMAS * sigma);
        eprintln!(
            "geodensity: expanded grid to {}x{} cells to cover {outliers} head(s)",
            grid.cols, grid.rows
        );
    }
    let density = head_plane_density(&ann, &g.h, sigma, &grid)?;
    write_density(out, &density)
}

#[allow(clippy::too_many_arguments)]
fn cmd_convert(
    input: &Path,
    to: TargetPlane,
    telemetry: &Path,
    frame: i64,
    grid: Option<&Path>,
    cell: f64,
    out: &Path,
) -> Result<(), CliError> {
    let map = read_density(input)?;
    let g = frame_geometry(telemetry, frame)?;
    let m = scale_map(&g.h, &g.k);
    let converted = match to {
        TargetPlane::Image => head_to_image_density(&map, &g.h, &m)?,
        TargetPlane::Head => {
            if map.plane() != Plane::Image {
                return Err(DensityError::PlaneMismatch {
                    expected: Plane::Image,
                    found: map.plane(),
                }
                .into());
            }
            let grid = match grid {
                Some(p) => read_grid(p)?,
                None => RasterGrid::covering_image(&g.h, &g.k, 0.0, cell)?,
            };
            image_to_head_density(&map, &g.h, &m, &grid)?
        }
    };
    write_density(out, &converted)
}

struct PredictArgs<'a> {
    predictor: &'a str,
    annotations: Option<&'a Path>,
    density: Option<&'a Path>,
    telemetry: &'a Path,
    frame: Option<i64>,
    grid: Option<&'a Path>,
    sigma: f64,
    cell: f64,
    noise_std: f64,
    seed: u64,
    out: &'a Path,
}

fn cmd_predict(args: PredictArgs<'_>) -> Result<(), CliError> {
    let model = predictor::by_name(args.predictor, args.noise_std, args.seed)
        .ok_or_else(|| CliError::new(EXIT_INPUT, format!("unknown predictor '{}'", args.predictor)))?;
    let ann = args.annotations.map(read_annotations).transpose()?;
    let density = args.density.map(read_density).transpose()?;
    let frame = match (args.frame, &ann) {
        (Some(f), _) => f,
        (None, Some(a)) => a.frame,
        (None, None) => return Err(CliError::new(EXIT_INPUT, "--frame is required with --density")),
    };
    let g = frame_geometry(args.telemetry, frame)?;
    let m = scale_map(&g.h, &g.k);
    let heads = match &ann {
        Some(a) => a.to_head_plane(&g.h)?,
        None => Vec::new(),
    };
    let grid = match args.grid {
        Some(p) => read_grid(p)?,
        None => match &density {
            Some(d) if d.plane() == Plane::Head => *d.grid(),
            _ => default_grid(&g, &heads, args.sigma, args.cell)?,
        },
    };
    let input = match (&ann, &density) {
        (Some(a), _) => PredictorInput::Annotations(a),
        (None, Some(d)) => PredictorInput::Density(d),
        (None, None) => return Err(CliError::new(EXIT_INPUT, "one of --annotations or --density is required")),
    };
    let ctx = FrameContext {
        homography: &g.h,
        scale: &m,
        grid: &grid,
        sigma: args.sigma,
    };
    let out = model.predict(&input, &ctx)?;
    write_density(args.out, &out)
}

fn read_triplet(paths: &[PathBuf]) -> Result<[DensityMap; 3], CliError> {
    let maps = paths.iter().map(|p| read_density(p)).collect::<Result<Vec<_>, _>>()?;
    maps.try_into()
        .map_err(|_| CliError::new(EXIT_INPUT, "expected exactly three prediction maps"))
}

fn triplet_blocks(maps: &[DensityMap; 3], blocks: &Path) -> Result<BlockGrid, CliError> {
    for m in maps {
        if m.plane() != Plane::Head {
            return Err(ConsistencyError::PlaneMismatch(m.plane()).into());
        }
        if !m.grid().same_geometry(maps[0].grid()) {
            return Err(ConsistencyError::GridMismatch.into());
        }
    }
    let config: BlockConfig = read_json(blocks)?;
    Ok(config.build(*maps[0].grid())?)
}

fn cmd_check(pred: &[PathBuf], blocks: &Path, slack: Option<f64>) -> Result<(), CliError> {
    let maps = read_triplet(pred)?;
    let blocks = triplet_blocks(&maps, blocks)?;
    let c0 = block_counts(&maps[0], &blocks)?;
    let c1 = block_counts(&maps[1], &blocks)?;
    let c2 = block_counts(&maps[2], &blocks)?;
    let slack = slack.unwrap_or_else(|| default_slack(&c0, &c1, &c2));
    let violations = conservation_check(&c0, &c1, &c2, &blocks, slack)?;
    if !violations.is_empty() {
        eprintln!("geodensity: {} conservation violation(s)", violations.len());
    }
    print_json(&violations)
}

fn cmd_loss(pred: &[PathBuf], truth: &Path, blocks: &Path, roi: Option<&Path>) -> Result<(), CliError> {
    let maps = read_triplet(pred)?;
    let blocks = triplet_blocks(&maps, blocks)?;
    let truth = read_density(truth)?;
    let roi = roi.map(read_roi).transpose()?;
    let loss = composite_loss([&maps[0], &maps[1], &maps[2]], &truth, &blocks, roi.as_ref())?;
    print_json(&loss)
}

fn cmd_eval(pairs: &Path, roi: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let manifest: EvalManifest = read_json(pairs)?;
    let base = pairs.parent().unwrap_or(Path::new("."));
    let global_roi = roi.map(read_roi).transpose()?;
    let mut frames = Vec::with_capacity(manifest.pairs.len());
    for pair in &manifest.pairs {
        let truth = read_density(&base.join(&pair.truth))?;
        let predicted = read_density(&base.join(&pair.pred))?;
        let roi = match &pair.roi {
            Some(p) => Some(read_roi(&base.join(p))?),
            None => global_roi.clone(),
        };
        frames.push(FramePair::new(truth, predicted, roi));
    }
    let batch = EvaluationBatch::new(frames)?;
    write_json(out, &evaluate(&batch))?;
    Ok(())
}

fn cmd_simulate(config: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let config: SimConfig = match config {
        Some(p) => read_json(p)?,
        None => SimConfig::default(),
    };
    let seq = simulate(&config)?;
    write_simulation(&seq, out_dir)?;
    Ok(())
}
