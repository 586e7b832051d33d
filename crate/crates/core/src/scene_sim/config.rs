//! Scene configuration files (TOML).
//!
//! ```toml
//! schema_version = 1
//!
//! [ground]            # optional; omitted means no ground plane
//! height = 0.0
//!
//! [lidar]             # optional; defaults to a 64-channel spinning sensor
//! channels = 64
//! elevation_min_deg = -24.8
//! elevation_max_deg = 2.0
//! azimuth_step_deg = 0.2
//! max_range = 120.0
//! range_noise_sigma = 0.02
//! dropout = 0.0
//! mount = { x = 0.0, y = 0.0, z = 1.73, yaw_deg = 0.0 }
//!
//! [camera]            # optional; defaults to a 1242x375 camera co-located with the lidar
//! fx = 721.5
//! fy = 721.5
//! cx = 609.6
//! cy = 172.9
//! width = 1242
//! height = 375
//! mount = { x = 0.0, y = 0.0, z = 1.73 }   # body pose; x forward, y left, z up
//!
//! [[objects]]
//! id = 1
//! class = "Car"                  # Car | Van | Truck | Misc
//! shape = "car"                  # box | car | mesh
//! length = 4.2
//! width = 1.8
//! height = 1.5
//! pose = { x = 12.0, y = -2.0, z = 0.75, yaw_deg = 15.0 }
//! # shape = "mesh" takes `vertices = [[x, y, z], ...]` and `faces = [[i, j, k], ...]`
//! ```
//!
//! Object poses place the object's local origin (the centre of its bounding
//! box) in the world. Unknown keys are rejected.

use super::{
    car_mesh, LidarConfig, ObjectClass, Scene, SceneError, SceneObject, Shape,
};
use crate::geometry::{OrientedBox, PinholeCamera, RigidTransform, TriangleMesh, Vec3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SCENE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Invalid {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountSpec {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    #[serde(default)]
    pub roll_deg: f64,
    #[serde(default)]
    pub pitch_deg: f64,
    #[serde(default)]
    pub yaw_deg: f64,
}

impl MountSpec {
    pub fn at(x: f64, y: f64, z: f64, yaw_deg: f64) -> Self {
        Self {
            x,
            y,
            z,
            roll_deg: 0.0,
            pitch_deg: 0.0,
            yaw_deg,
        }
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_roll_pitch_yaw(
            self.roll_deg.to_radians(),
            self.pitch_deg.to_radians(),
            self.yaw_deg.to_radians(),
            Vec3::new(self.x, self.y, self.z),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundSpec {
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarSpec {
    pub channels: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub dropout: f64,
    pub mount: MountSpec,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            channels: 64,
            elevation_min_deg: -24.8,
            elevation_max_deg: 2.0,
            azimuth_step_deg: 0.2,
            max_range: 120.0,
            range_noise_sigma: 0.02,
            dropout: 0.0,
            mount: MountSpec::at(0.0, 0.0, 1.73, 0.0),
        }
    }
}

impl LidarSpec {
    pub fn to_config(&self, seed: u64) -> LidarConfig {
        LidarConfig {
            elevations: super::uniform_elevations(
                self.channels,
                self.elevation_min_deg,
                self.elevation_max_deg,
            ),
            azimuth_step: self.azimuth_step_deg.to_radians(),
            max_range: self.max_range,
            range_noise_sigma: self.range_noise_sigma,
            dropout: self.dropout,
            mount: self.mount.transform(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Body pose (x forward, y left, z up); the optical frame is derived from it.
    pub mount: MountSpec,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            fx: 721.5,
            fy: 721.5,
            cx: 609.6,
            cy: 172.9,
            width: 1242,
            height: 375,
            mount: MountSpec::at(0.0, 0.0, 1.73, 0.0),
        }
    }
}

impl CameraSpec {
    pub fn camera(&self) -> Result<PinholeCamera, crate::geometry::GeometryError> {
        PinholeCamera::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    /// Optical frame to world.
    pub fn optical_pose(&self) -> RigidTransform {
        self.mount
            .transform()
            .compose(&RigidTransform::sensor_to_optical().inverse())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeSpec {
    Box,
    Car,
    Mesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u32,
    pub class: ObjectClass,
    pub shape: ShapeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    pub pose: MountSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertices: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faces: Vec<[usize; 3]>,
}

impl ObjectSpec {
    fn dims(&self) -> Result<(f64, f64, f64), String> {
        match (self.length, self.width, self.height) {
            (Some(l), Some(w), Some(h)) => Ok((l, w, h)),
            _ => Err(format!(
                "object {}: shape {:?} needs length, width and height",
                self.id, self.shape
            )),
        }
    }

    fn to_object(&self) -> Result<SceneObject, String> {
        let shape = match self.shape {
            ShapeSpec::Box => {
                let (l, w, h) = self.dims()?;
                Shape::Box(OrientedBox::new(Vec3::zeros(), l, w, h, 0.0).map_err(|e| e.to_string())?)
            }
            ShapeSpec::Car => {
                let (l, w, h) = self.dims()?;
                if !(l > 0.0 && w > 0.0 && h > 0.0) {
                    return Err(format!("object {}: dimensions must be positive", self.id));
                }
                Shape::Mesh(car_mesh(l, w, h))
            }
            ShapeSpec::Mesh => Shape::Mesh(
                TriangleMesh::new(
                    self.vertices.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect(),
                    self.faces.clone(),
                )
                .map_err(|e| format!("object {}: {e}", self.id))?,
            ),
        };
        Ok(SceneObject {
            id: self.id,
            class: self.class,
            shape,
            pose: self.pose.transform(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground: Option<GroundSpec>,
    #[serde(default)]
    pub lidar: LidarSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            schema_version: SCENE_SCHEMA_VERSION,
            ground: Some(GroundSpec { height: 0.0 }),
            lidar: LidarSpec::default(),
            camera: CameraSpec::default(),
            objects: Vec::new(),
        }
    }
}

#[derive(Deserialize)]
struct SpannedConfig {
    objects: Option<Vec<toml::Spanned<toml::Value>>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl SceneConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, SceneConfigError> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| SceneConfigError::Parse {
            path: path.to_string(),
            message: e.to_string().trim_end().replace('\n', " | "),
        })?;
        // byte offsets of each [[objects]] entry, for line-numbered diagnostics
        let spans: Vec<usize> = toml::from_str::<SpannedConfig>(text)
            .ok()
            .and_then(|s| s.objects)
            .map(|v| v.iter().map(|o| o.span().start).collect())
            .unwrap_or_default();
        let invalid = |line: usize, message: String| SceneConfigError::Invalid {
            path: path.to_string(),
            line,
            message,
        };
        if cfg.schema_version != SCENE_SCHEMA_VERSION {
            let line = text
                .lines()
                .position(|l| l.trim_start().starts_with("schema_version"))
                .map_or(1, |i| i + 1);
            return Err(invalid(
                line,
                format!(
                    "unsupported schema_version {} (expected {SCENE_SCHEMA_VERSION})",
                    cfg.schema_version
                ),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, obj) in cfg.objects.iter().enumerate() {
            let line = spans.get(i).map_or(1, |&o| line_of(text, o));
            if !seen.insert(obj.id) {
                return Err(invalid(line, format!("duplicate object id {}", obj.id)));
            }
            obj.to_object().map_err(|m| invalid(line, m))?;
        }
        cfg.camera
            .camera()
            .map_err(|e| invalid(1, format!("camera: {e}")))?;
        cfg.lidar
            .to_config(0)
            .validate()
            .map_err(|e| invalid(1, format!("lidar: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SceneConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serialises")
    }

    pub fn build_scene(&self) -> Result<Scene, SceneError> {
        let objects = self
            .objects
            .iter()
            .map(|o| o.to_object().map_err(SceneError::InvalidObject))
            .collect::<Result<Vec<_>, _>>()?;
        Scene::new(objects, self.ground.map(|g| g.height))
    }

    /// Sensor frame to optical frame.
    pub fn lidar_to_camera(&self) -> RigidTransform {
        self.camera
            .optical_pose()
            .inverse()
            .compose(&self.lidar.mount.transform())
    }
}
