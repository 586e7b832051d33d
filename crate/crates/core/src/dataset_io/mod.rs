//! KITTI-style files, dataset manifests and the percentage split sampler.
//!
//! A dataset directory looks like
//!
//! ```text
//! manifest.json
//! velodyne/000000.bin          raw 360° scan
//! depth/000000.pfm             z-depth image, +inf where nothing was hit
//! label_2/000000.txt           KITTI labels of detectable objects
//! clouds/<mode>/000000.bin     one cloud per generation mode
//! ```
//!
//! All paths inside the manifest are relative to its directory.

mod depth_file;
mod labels;
mod velodyne;

pub use depth_file::{decode_pfm, encode_pfm, read_depth, write_depth};
pub use labels::{format_labels, parse_labels, read_labels, write_labels, LabelRecord, DONT_CARE};
pub use velodyne::{read_velodyne, write_velodyne, VelodyneFrame, SYNTHETIC_INTENSITY};

use crate::geometry::{PinholeCamera, RigidTransform, Vec3};
use crate::sampling::{self, SamplerConfig, SamplingError};
use crate::scene_sim::{
    backproject_depth, ground_truth, raycast_lidar, render_depth, DepthMap, LidarReturn,
    LidarScan, SceneConfig, SceneError,
};
use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {reason}")]
    MalformedFile { path: String, reason: String },
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: invalid manifest: {reason}")]
    InvalidManifest { path: String, reason: String },
    #[error("manifest has no frames")]
    EmptyManifest,
    #[error("invalid split: {0}")]
    BadSplit(String),
    #[error("frame {frame}: {source}")]
    Scene {
        frame: String,
        #[source]
        source: SceneError,
    },
    #[error("frame {frame}: {source}")]
    Sampling {
        frame: String,
        #[source]
        source: SamplingError,
    },
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DatasetError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| DatasetError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    /// In-image LiDAR returns.
    CarlaOrigin,
    /// Every back-projected depth pixel.
    DepthBp,
    /// The sampled cloud `P`.
    LidarGuided,
}

impl GenerationMode {
    pub const ALL: [GenerationMode; 3] = [
        GenerationMode::CarlaOrigin,
        GenerationMode::DepthBp,
        GenerationMode::LidarGuided,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::CarlaOrigin => "carla-origin",
            GenerationMode::DepthBp => "depth-bp",
            GenerationMode::LidarGuided => "lidar-guided",
        }
    }
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenerationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected carla-origin, depth-bp or lidar-guided)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for TransformRecord {
    fn from(t: &RigidTransform) -> Self {
        let r = t.rotation();
        Self {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: [t.translation().x, t.translation().y, t.translation().z],
        }
    }
}

impl TransformRecord {
    pub fn to_transform(&self) -> Result<RigidTransform, String> {
        let r = &self.rotation;
        let m = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform::new(m, Vec3::from(self.translation)).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub camera: PinholeCamera,
    pub lidar_to_camera: TransformRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudRecord {
    pub mode: GenerationMode,
    pub path: String,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: String,
    pub sensor: SensorRecord,
    pub scan: FileRecord,
    pub depth: Option<String>,
    pub labels: String,
    /// LiDAR returns inside each labelled box, in label-file order.
    pub num_lidar_pts: Vec<u32>,
    pub clouds: Vec<CloudRecord>,
}

impl FrameRecord {
    pub fn cloud(&self, mode: GenerationMode) -> Option<&CloudRecord> {
        self.clouds.iter().find(|c| c.mode == mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub split: Split,
    /// Modes with a cloud in every frame, sorted.
    pub modes: Vec<GenerationMode>,
    pub frames: Vec<FrameRecord>,
}

impl DatasetManifest {
    pub fn new(split: Split) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            split,
            modes: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises") + "\n"
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, DatasetError> {
        let invalid = |reason: String| DatasetError::InvalidManifest {
            path: path.to_string(),
            reason,
        };
        let manifest: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                manifest.schema_version
            )));
        }
        let mut ids = HashSet::new();
        for f in &manifest.frames {
            if !ids.insert(&f.id) {
                return Err(invalid(format!("duplicate frame id {}", f.id)));
            }
            f.sensor.camera.validate().map_err(|e| invalid(format!("frame {}: {e}", f.id)))?;
            f.sensor
                .lidar_to_camera
                .to_transform()
                .map_err(|e| invalid(format!("frame {}: {e}", f.id)))?;
        }
        Ok(manifest)
    }

    /// Writes `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        write_file(&path, self.to_json().as_bytes())?;
        Ok(path)
    }

    /// Reads a manifest and checks that every referenced file exists with the
    /// expected size. `path` may name the file or its directory.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file).map_err(|e| DatasetError::io(&file, e))?;
        let manifest = Self::from_json(&text, &file.display().to_string())?;
        manifest.verify_files(file.parent().unwrap_or(Path::new(".")))?;
        Ok(manifest)
    }

    pub fn verify_files(&self, root: &Path) -> Result<(), DatasetError> {
        let check = |rel: &str, points: Option<usize>| -> Result<(), DatasetError> {
            let p = root.join(rel);
            let meta = std::fs::metadata(&p).map_err(|e| DatasetError::io(&p, e))?;
            if let Some(n) = points {
                if meta.len() != 16 * n as u64 {
                    return Err(DatasetError::MalformedFile {
                        path: p.display().to_string(),
                        reason: format!("{} bytes, manifest records {n} points", meta.len()),
                    });
                }
            }
            Ok(())
        };
        for f in &self.frames {
            check(&f.scan.path, Some(f.scan.points))?;
            check(&f.labels, None)?;
            if let Some(d) = &f.depth {
                check(d, None)?;
            }
            for c in &f.clouds {
                check(&c.path, Some(c.points))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Share of frames to keep, in `(0, 100]`.
    pub percentage: f64,
    pub seed: u64,
}

/// Number of frames kept from `n` at `percentage` percent (rounded up).
pub fn split_size(n: usize, percentage: f64) -> usize {
    // the small slack keeps exact products such as 1% of 6000 from rounding up
    ((percentage / 100.0 * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Uniform sample without replacement of `ceil(percentage% of N)` frames,
/// kept in their original order.
pub fn sample_split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<DatasetManifest, DatasetError> {
    if !(spec.percentage > 0.0 && spec.percentage <= 100.0) {
        return Err(DatasetError::BadSplit(format!(
            "percentage must lie in (0, 100], got {}",
            spec.percentage
        )));
    }
    let n = manifest.frames.len();
    if n == 0 {
        return Err(DatasetError::EmptyManifest);
    }
    let k = split_size(n, spec.percentage);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(DatasetManifest {
        frames: picked.into_iter().map(|i| manifest.frames[i].clone()).collect(),
        ..manifest.clone()
    })
}

pub fn frame_id(index: usize) -> String {
    format!("{index:06}")
}

/// Scan rebuilt from stored points (channel and azimuth indices are not stored).
pub fn scan_from_points(points: &[Vec3]) -> LidarScan {
    LidarScan {
        returns: points
            .iter()
            .map(|&point| LidarReturn {
                point,
                channel: 0,
                azimuth: 0,
                range: point.norm(),
            })
            .collect(),
        channels: 1,
        max_range: f64::INFINITY,
        sensor_pose: RigidTransform::identity(),
    }
}

/// Ray-casts, renders and labels each scene; writes scans, depth maps,
/// labels and the manifest into `out_dir`. Frame `i` uses seed `seed + i`.
pub fn simulate_dataset(
    scenes: &[SceneConfig],
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest, DatasetError> {
    let mut manifest = DatasetManifest::new(Split::Train);
    for (i, cfg) in scenes.iter().enumerate() {
        let id = frame_id(i);
        let scene_err = |source| DatasetError::Scene {
            frame: id.clone(),
            source,
        };
        let scene = cfg.build_scene().map_err(scene_err)?;
        let lidar = cfg.lidar.to_config(seed.wrapping_add(i as u64));
        let scan = raycast_lidar(&scene, &lidar).map_err(scene_err)?;
        let camera = cfg
            .camera
            .camera()
            .map_err(|e| scene_err(SceneError::Geometry(e)))?;
        let depth = render_depth(&scene, &camera, &cfg.camera.optical_pose());
        let ext = cfg.lidar_to_camera();
        let gts = ground_truth(&scene, &scan);
        let labels: Vec<LabelRecord> = gts
            .iter()
            .map(|g| LabelRecord::from_box(&g.bbox, g.class.as_str(), &ext, Some(&camera)))
            .collect();

        let frame = FrameRecord {
            id: id.clone(),
            sensor: SensorRecord {
                camera,
                lidar_to_camera: TransformRecord::from(&ext),
            },
            scan: FileRecord {
                path: format!("velodyne/{id}.bin"),
                points: scan.len(),
            },
            depth: Some(format!("depth/{id}.pfm")),
            labels: format!("label_2/{id}.txt"),
            num_lidar_pts: gts.iter().map(|g| g.points_inside).collect(),
            clouds: Vec::new(),
        };
        write_velodyne(
            &VelodyneFrame::from_positions(scan.points()),
            &out_dir.join(&frame.scan.path),
        )?;
        write_depth(&depth, &out_dir.join(frame.depth.as_ref().expect("set above")))?;
        write_labels(&labels, &out_dir.join(&frame.labels))?;
        manifest.frames.push(frame);
    }
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// One frame's inputs as read back from disk.
pub struct FrameInputs {
    pub scan: LidarScan,
    pub depth: Option<DepthMap>,
    pub camera: PinholeCamera,
    pub lidar_to_camera: RigidTransform,
}

pub fn load_frame(frame: &FrameRecord, root: &Path) -> Result<FrameInputs, DatasetError> {
    let scan = scan_from_points(&read_velodyne(&root.join(&frame.scan.path))?.positions());
    let depth = frame
        .depth
        .as_ref()
        .map(|d| read_depth(&root.join(d)))
        .transpose()?;
    let lidar_to_camera = frame
        .sensor
        .lidar_to_camera
        .to_transform()
        .map_err(|reason| DatasetError::InvalidManifest {
            path: root.display().to_string(),
            reason,
        })?;
    Ok(FrameInputs {
        scan,
        depth,
        camera: frame.sensor.camera,
        lidar_to_camera,
    })
}

/// The cloud of one generation mode, in the LiDAR frame.
pub fn generate_cloud(
    mode: GenerationMode,
    inputs: &FrameInputs,
    sampler: &SamplerConfig,
) -> Result<Vec<Vec3>, SamplingError> {
    let no_depth = || DepthMap::filled(inputs.camera.width, inputs.camera.height, DepthMap::NO_HIT);
    match mode {
        GenerationMode::CarlaOrigin => {
            match sampling::project_scan_to_guides(&inputs.scan, &inputs.camera, &inputs.lidar_to_camera) {
                Ok(g) => Ok(g.entries.into_iter().map(|e| e.source).collect()),
                Err(SamplingError::EmptyGuide) => Ok(Vec::new()),
                Err(e) => Err(e),
            }
        }
        GenerationMode::DepthBp => {
            let depth = inputs.depth.clone().unwrap_or_else(no_depth);
            let d = backproject_depth(&depth, &inputs.camera, &inputs.lidar_to_camera.inverse());
            Ok(d.iter().map(|(_, p)| *p).collect())
        }
        GenerationMode::LidarGuided => {
            let depth = inputs.depth.clone().unwrap_or_else(no_depth);
            let cloud = sampling::lidar_guided_sample(
                &inputs.scan,
                &depth,
                &inputs.camera,
                &inputs.lidar_to_camera,
                sampler,
            )?;
            Ok(cloud.positions().copied().collect())
        }
    }
}

/// Adds one mode's clouds to every frame (replacing older ones of that mode)
/// and rewrites the manifest. Frame `i` samples with seed `sampler.seed + i`.
pub fn sample_dataset(
    manifest: &mut DatasetManifest,
    root: &Path,
    mode: GenerationMode,
    sampler: &SamplerConfig,
) -> Result<(), DatasetError> {
    for (i, frame) in manifest.frames.iter_mut().enumerate() {
        let inputs = load_frame(frame, root)?;
        let config = SamplerConfig {
            seed: sampler.seed.wrapping_add(i as u64),
            ..sampler.clone()
        };
        let points = generate_cloud(mode, &inputs, &config).map_err(|source| DatasetError::Sampling {
            frame: frame.id.clone(),
            source,
        })?;
        let path = format!("clouds/{mode}/{}.bin", frame.id);
        write_velodyne(&VelodyneFrame::from_positions(&points), &root.join(&path))?;
        frame.clouds.retain(|c| c.mode != mode);
        frame.clouds.push(CloudRecord {
            mode,
            path,
            points: points.len(),
        });
        frame.clouds.sort_by_key(|c| c.mode);
    }
    let mut modes: BTreeSet<GenerationMode> = manifest.modes.iter().copied().collect();
    modes.insert(mode);
    manifest.modes = modes.into_iter().collect();
    manifest.save(root)?;
    Ok(())
}

/// [`simulate_dataset`] followed by [`sample_dataset`] for each mode.
pub fn export_dataset(
    scenes: &[SceneConfig],
    modes: &BTreeSet<GenerationMode>,
    seed: u64,
    sampler: &SamplerConfig,
    out_dir: &Path,
) -> Result<DatasetManifest, DatasetError> {
    let mut manifest = simulate_dataset(scenes, seed, out_dir)?;
    for &mode in modes {
        sample_dataset(&mut manifest, out_dir, mode, sampler)?;
    }
    Ok(manifest)
}
