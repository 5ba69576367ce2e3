//! JSON schemas exchanged by the toolkit.
//!
//! | file | shape |
//! |------|-------|
//! | telemetry | `{"frame", "altitude_m", "pitch_rad", "intrinsics": {fx, fy, cx, cy, width, height}}`, one object or an array |
//! | annotations | `{"frame": int, "heads": [[u, v], ...]}` |
//! | grid | `{"origin": [x, y], "cell_m": float, "cols": int, "rows": int}` |
//! | blocks | `{"block_m": float, "exempt": [[bx, by], ...]}` |
//! | violations | `[{"block": [bx, by], "excess_prev": float, "excess_next": float}, ...]` |
//! | eval pairs | `{"pairs": [{"truth": path, "pred": path, "roi": path?}, ...]}` |
//! | metrics | `{"mae", "rmse", "mpae", "n_frames"}` |
//!
//! Paths inside manifests are relative to the manifest's directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::Point2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{BlockGrid, BlockIndex, ConsistencyError};
use crate::crowdsim::SimSequence;
use crate::density::{AnnotationSet, HeadPlaneGrid};
use crate::dmap::{self, DmapError};
use crate::geometry::{CameraIntrinsics, DronePose, GeometryError};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Dmap {
        path: PathBuf,
        #[source]
        source: DmapError,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub frame: i64,
    pub altitude_m: f64,
    pub pitch_rad: f64,
    pub intrinsics: CameraIntrinsics,
}

impl TelemetryRecord {
    pub fn new(frame: i64, pose: &DronePose, k: &CameraIntrinsics) -> Self {
        Self {
            frame,
            altitude_m: pose.altitude,
            pitch_rad: pose.pitch,
            intrinsics: *k,
        }
    }

    pub fn pose(&self) -> Result<DronePose, GeometryError> {
        DronePose::new(self.altitude_m, self.pitch_rad)
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, GeometryError> {
        self.intrinsics.validate()?;
        Ok(self.intrinsics)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

/// Reads a telemetry file holding either one record or an array of records.
pub fn read_telemetry(path: &Path) -> Result<Vec<TelemetryRecord>, FormatError> {
    Ok(match read_json::<OneOrMany<TelemetryRecord>>(path)? {
        OneOrMany::One(r) => vec![r],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationsFile {
    pub frame: i64,
    pub heads: Vec<[f64; 2]>,
}

impl From<&AnnotationSet> for AnnotationsFile {
    fn from(a: &AnnotationSet) -> Self {
        Self {
            frame: a.frame,
            heads: a.heads.iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

impl From<AnnotationsFile> for AnnotationSet {
    fn from(a: AnnotationsFile) -> Self {
        AnnotationSet::new(a.frame, a.heads.into_iter().map(|[u, v]| Point2::new(u, v)).collect())
    }
}

pub fn read_annotations(path: &Path) -> Result<AnnotationSet, FormatError> {
    let file: AnnotationsFile = read_json(path)?;
    if file.heads.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FormatError::Invalid {
            path: path.to_path_buf(),
            message: "non-finite head coordinate".into(),
        });
    }
    Ok(file.into())
}

pub fn read_grid(path: &Path) -> Result<HeadPlaneGrid, FormatError> {
    let grid: HeadPlaneGrid = read_json(path)?;
    grid.validate().map_err(|e| FormatError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub block_m: f64,
    #[serde(default)]
    pub exempt: Vec<[usize; 2]>,
}

impl BlockConfig {
    pub fn from_blocks(blocks: &BlockGrid) -> Self {
        Self {
            block_m: blocks.block_side_m(),
            exempt: blocks.exempt_blocks().into_iter().map(|(x, y)| [x, y]).collect(),
        }
    }

    pub fn build(&self, grid: HeadPlaneGrid) -> Result<BlockGrid, ConsistencyError> {
        let exempt: Vec<BlockIndex> = self.exempt.iter().map(|b| (b[0], b[1])).collect();
        BlockGrid::new(grid, self.block_m, &exempt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub truth: PathBuf,
    pub pred: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub pairs: Vec<EvalPair>,
}

/// Per-frame entry of a simulation run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifestFrame {
    pub frame: usize,
    pub time_s: f64,
    pub annotations: PathBuf,
    pub visible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub config: PathBuf,
    pub telemetry: PathBuf,
    pub grid: PathBuf,
    pub blocks: PathBuf,
    pub true_counts: PathBuf,
    pub n_frames: usize,
    pub frames: Vec<SimManifestFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCountsRecord {
    pub frame: usize,
    pub time_s: f64,
    /// Row-major, `rows` arrays of `cols` counts.
    pub counts: Vec<Vec<f64>>,
}

/// Writes a simulation run into `dir`:
/// `manifest.json`, `config.json`, `telemetry.json`, `grid.json`,
/// `blocks.json`, `true_counts.json` and `annotations/NNNNNN.json`.
pub fn write_simulation(seq: &SimSequence, dir: &Path) -> Result<SimManifest, FormatError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FormatError::Io { path, source }
    };
    let ann_dir = dir.join("annotations");
    fs::create_dir_all(&ann_dir).map_err(io_err(&ann_dir))?;

    write_json(&dir.join("config.json"), &seq.config)?;
    let telemetry: Vec<&TelemetryRecord> = seq.frames.iter().map(|f| &f.telemetry).collect();
    write_json(&dir.join("telemetry.json"), &telemetry)?;
    write_json(&dir.join("grid.json"), &seq.grid)?;
    write_json(&dir.join("blocks.json"), &BlockConfig::from_blocks(&seq.blocks))?;

    let (cols, _) = seq.blocks.dims();
    let counts: Vec<TrueCountsRecord> = seq
        .frames
        .iter()
        .map(|f| TrueCountsRecord {
            frame: f.frame,
            time_s: f.time,
            counts: f.true_counts.counts().chunks(cols).map(<[f64]>::to_vec).collect(),
        })
        .collect();
    write_json(&dir.join("true_counts.json"), &counts)?;

    let mut frames = Vec::with_capacity(seq.frames.len());
    for f in &seq.frames {
        let rel = PathBuf::from("annotations").join(format!("{:06}.json", f.frame));
        write_json(&dir.join(&rel), &AnnotationsFile::from(&f.annotations))?;
        frames.push(SimManifestFrame {
            frame: f.frame,
            time_s: f.time,
            annotations: rel,
            visible: f.annotations.count(),
        });
    }
    let manifest = SimManifest {
        config: "config.json".into(),
        telemetry: "telemetry.json".into(),
        grid: "grid.json".into(),
        blocks: "blocks.json".into(),
        true_counts: "true_counts.json".into(),
        n_frames: frames.len(),
        frames,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_dmap_file(path: &Path) -> Result<dmap::DmapFile, FormatError> {
    let bytes = fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    dmap::decode(&bytes).map_err(|source| FormatError::Dmap {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_dmap_file(path: &Path, file: &dmap::DmapFile) -> Result<(), FormatError> {
    fs::write(path, dmap::encode(file)).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}
