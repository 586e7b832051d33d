//! Analytic scenes and the two baseline generators: a ray-cast spinning
//! LiDAR and a depth camera whose map can be lifted back to 3D.

mod config;
mod procedural;

pub use config::{
    CameraSpec, GroundSpec, LidarSpec, MountSpec, ObjectSpec, SceneConfig, SceneConfigError,
    ShapeSpec, SCENE_SCHEMA_VERSION,
};
pub use procedural::{car_mesh, generate_scene, ProceduralOptions};

use crate::geometry::{
    ray_box_intersect, Aabb, GeometryError, OrientedBox, PinholeCamera, Ray, RigidTransform,
    TriangleMesh, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Rays further than this produce a no-hit pixel.
pub const DEPTH_FAR_PLANE: f64 = 1000.0;

/// Returns lying on a face of a labelled box count as inside it.
pub const SURFACE_MARGIN: f64 = 1e-6;

const POSE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("duplicate object id {0}")]
    DuplicateId(u32),
    #[error("object {0}: pose must rotate about the vertical axis only")]
    NonVerticalPose(u32),
    #[error("invalid lidar config: {0}")]
    InvalidLidar(String),
    #[error("invalid object: {0}")]
    InvalidObject(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectClass {
    Car,
    Van,
    Truck,
    /// Static clutter (walls, poles, buildings). Never labelled.
    Misc,
}

impl ObjectClass {
    pub fn is_detectable(self) -> bool {
        matches!(self, ObjectClass::Car | ObjectClass::Van | ObjectClass::Truck)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Car => "Car",
            ObjectClass::Van => "Van",
            ObjectClass::Truck => "Truck",
            ObjectClass::Misc => "Misc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Car" => Some(ObjectClass::Car),
            "Van" => Some(ObjectClass::Van),
            "Truck" => Some(ObjectClass::Truck),
            "Misc" => Some(ObjectClass::Misc),
            _ => None,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Geometry in the object's local frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box(OrientedBox),
    Mesh(TriangleMesh),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: u32,
    pub class: ObjectClass,
    pub shape: Shape,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
enum WorldShape {
    Box(OrientedBox),
    Mesh { mesh: TriangleMesh, bounds: Aabb },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    objects: Vec<SceneObject>,
    world: Vec<WorldShape>,
    labels: Vec<OrientedBox>,
    ground: Option<f64>,
}

/// What a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitTarget {
    Object(usize),
    Ground,
}

impl Scene {
    /// `ground` is the height of the horizontal ground plane, if present.
    pub fn new(objects: Vec<SceneObject>, ground: Option<f64>) -> Result<Self, SceneError> {
        let mut ids = BTreeSet::new();
        let mut world = Vec::with_capacity(objects.len());
        let mut labels = Vec::with_capacity(objects.len());
        for obj in &objects {
            if !ids.insert(obj.id) {
                return Err(SceneError::DuplicateId(obj.id));
            }
            if !obj.pose.is_yaw_only(POSE_TOLERANCE) {
                return Err(SceneError::NonVerticalPose(obj.id));
            }
            let yaw = obj.pose.yaw();
            match &obj.shape {
                Shape::Box(b) => {
                    let wb = OrientedBox::new(
                        obj.pose.apply_point(&b.center),
                        b.length,
                        b.width,
                        b.height,
                        b.yaw + yaw,
                    )?;
                    world.push(WorldShape::Box(wb));
                    labels.push(wb);
                }
                Shape::Mesh(m) => {
                    m.validate()?;
                    let local = m.aabb().expect("validated mesh has vertices");
                    let ext = local.max - local.min;
                    let center = obj.pose.apply_point(&((local.max + local.min) / 2.0));
                    labels.push(OrientedBox::new(center, ext.x, ext.y, ext.z, yaw)?);
                    let wm = m.transformed(&obj.pose);
                    let bounds = wm.aabb().expect("validated mesh has vertices");
                    world.push(WorldShape::Mesh { mesh: wm, bounds });
                }
            }
        }
        Ok(Self {
            objects,
            world,
            labels,
            ground,
        })
    }

    pub fn empty() -> Self {
        Self {
            objects: Vec::new(),
            world: Vec::new(),
            labels: Vec::new(),
            ground: None,
        }
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn ground(&self) -> Option<f64> {
        self.ground
    }

    /// World-frame bounding box of object `index` (the box itself, or the
    /// local bounds of a mesh carried by its pose).
    pub fn label_box(&self, index: usize) -> &OrientedBox {
        &self.labels[index]
    }

    /// Nearest hit with `t > 0`.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, HitTarget)> {
        let mut best: Option<(f64, HitTarget)> = None;
        let mut consider = |t: f64, target: HitTarget| {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, target));
            }
        };
        for (i, shape) in self.world.iter().enumerate() {
            let hit = match shape {
                WorldShape::Box(b) => ray_box_intersect(ray, b),
                WorldShape::Mesh { mesh, bounds } => {
                    if bounds.hit_by(ray) {
                        mesh.intersect(ray)
                    } else {
                        None
                    }
                }
            };
            if let Some(t) = hit {
                consider(t, HitTarget::Object(i));
            }
        }
        if let Some(h) = self.ground {
            let dz = ray.direction().z;
            if dz != 0.0 {
                let t = (h - ray.origin.z) / dz;
                if t > 0.0 {
                    consider(t, HitTarget::Ground);
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarConfig {
    /// One elevation angle per channel, radians.
    pub elevations: Vec<f64>,
    /// Radians between consecutive firings.
    pub azimuth_step: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub dropout: f64,
    /// Sensor-to-world pose; must be level (yaw and translation only).
    pub mount: RigidTransform,
    pub seed: u64,
}

impl LidarConfig {
    /// 64 channels spread evenly over [-24.8°, +2.0°], 0.2° azimuth step,
    /// 2 cm range noise and no dropout.
    pub fn hdl64(mount: RigidTransform, seed: u64) -> Self {
        Self {
            elevations: uniform_elevations(64, -24.8, 2.0),
            azimuth_step: 0.2f64.to_radians(),
            max_range: 120.0,
            range_noise_sigma: 0.02,
            dropout: 0.0,
            mount,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.elevations.is_empty() {
            return Err(SceneError::InvalidLidar("no channels".into()));
        }
        if !(self.azimuth_step > 0.0) {
            return Err(SceneError::InvalidLidar("azimuth step must be > 0".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(SceneError::InvalidLidar("max range must be > 0".into()));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(SceneError::InvalidLidar("noise sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(SceneError::InvalidLidar("dropout must lie in [0, 1]".into()));
        }
        if !self.mount.is_yaw_only(POSE_TOLERANCE) {
            return Err(SceneError::InvalidLidar("mount must be level".into()));
        }
        Ok(())
    }

    pub fn azimuth_count(&self) -> u32 {
        (2.0 * std::f64::consts::PI / self.azimuth_step - 1e-9).ceil() as u32
    }

    /// Unit direction of ray (channel, azimuth index) in the sensor frame.
    pub fn ray_direction(&self, channel: usize, azimuth: u32) -> Vec3 {
        let el = self.elevations[channel];
        let az = azimuth as f64 * self.azimuth_step;
        let (se, ce) = el.sin_cos();
        let (sa, ca) = az.sin_cos();
        Vec3::new(ce * ca, ce * sa, se)
    }
}

/// `count` elevations evenly spaced from `min_deg` to `max_deg`, in radians.
pub fn uniform_elevations(count: usize, min_deg: f64, max_deg: f64) -> Vec<f64> {
    if count == 1 {
        return vec![min_deg.to_radians()];
    }
    (0..count)
        .map(|i| (min_deg + (max_deg - min_deg) * i as f64 / (count - 1) as f64).to_radians())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarReturn {
    /// Sensor frame.
    pub point: Vec3,
    pub channel: u32,
    pub azimuth: u32,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub returns: Vec<LidarReturn>,
    pub channels: u32,
    pub max_range: f64,
    pub sensor_pose: RigidTransform,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &Vec3> {
        self.returns.iter().map(|r| &r.point)
    }
}

/// Independent random stream for one ray, keyed by (seed, channel, azimuth).
fn ray_stream(seed: u64, ray_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ray_id);
    rng
}

/// Casts one ray per (channel, azimuth index) and keeps the nearest hit
/// within range, then applies Gaussian range jitter and Bernoulli dropout.
pub fn raycast_lidar(scene: &Scene, config: &LidarConfig) -> Result<LidarScan, SceneError> {
    config.validate()?;
    let n_az = config.azimuth_count();
    let n_rays = config.elevations.len() as u64 * n_az as u64;
    let origin = *config.mount.translation();
    let returns = (0..n_rays)
        .into_par_iter()
        .filter_map(|ray_id| {
            let channel = (ray_id / n_az as u64) as usize;
            let azimuth = (ray_id % n_az as u64) as u32;
            let dir = config.ray_direction(channel, azimuth);
            let mut rng = ray_stream(config.seed, ray_id);
            let keep_draw: f64 = rng.gen();
            let noise: f64 = rng.sample(StandardNormal);
            let ray = Ray::new(origin, config.mount.apply_vector(&dir)).ok()?;
            let (t, _) = scene.intersect(&ray)?;
            if t > config.max_range || keep_draw < config.dropout {
                return None;
            }
            let range = t + config.range_noise_sigma * noise;
            if !(range > 0.0 && range <= config.max_range) {
                return None;
            }
            Some(LidarReturn {
                point: dir * range,
                channel: channel as u32,
                azimuth,
                range,
            })
        })
        .collect();
    Ok(LidarScan {
        returns,
        channels: config.elevations.len() as u32,
        max_range: config.max_range,
        sensor_pose: config.mount,
    })
}

/// Dense z-depth image; `f64::INFINITY` marks pixels without a hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    /// Row-major.
    pub values: Vec<f64>,
}

impl DepthMap {
    pub const NO_HIT: f64 = f64::INFINITY;

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, col: u32, row: u32) -> f64 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    pub fn is_hit(&self, col: u32, row: u32) -> bool {
        self.get(col, row).is_finite()
    }

    pub fn hit_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

/// One ray through every pixel centre; `camera_pose` maps the optical frame to the world.
pub fn render_depth(scene: &Scene, camera: &PinholeCamera, camera_pose: &RigidTransform) -> DepthMap {
    let origin = *camera_pose.translation();
    let values = (0..camera.pixel_count())
        .into_par_iter()
        .map(|i| {
            let col = (i % camera.width as usize) as f64;
            let row = (i / camera.width as usize) as f64;
            let dir_cam = camera.pixel_ray_direction(col, row);
            let ray = Ray::new(origin, camera_pose.apply_vector(&dir_cam))
                .expect("pixel directions are unit vectors");
            match scene.intersect(&ray) {
                Some((t, _)) if t <= DEPTH_FAR_PLANE => t * dir_cam.z,
                _ => DepthMap::NO_HIT,
            }
        })
        .collect();
    DepthMap {
        width: camera.width,
        height: camera.height,
        values,
    }
}

/// Back-projected depth pixels, keyed by integer pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPointSet {
    pub width: u32,
    pub height: u32,
    points: Vec<Option<Vec3>>,
}

impl PseudoPointSet {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            points: vec![None; width as usize * height as usize],
        }
    }

    pub fn get(&self, col: u32, row: u32) -> Option<&Vec3> {
        if col >= self.width || row >= self.height {
            return None;
        }
        self.points[row as usize * self.width as usize + col as usize].as_ref()
    }

    pub fn contains(&self, col: u32, row: u32) -> bool {
        self.get(col, row).is_some()
    }

    pub fn len(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in row-major order as `((col, row), point)`.
    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), &Vec3)> {
        let w = self.width as usize;
        self.points.iter().enumerate().filter_map(move |(i, p)| {
            p.as_ref()
                .map(|p| (((i % w) as u32, (i / w) as u32), p))
        })
    }
}

/// Lifts each hit pixel to 3D; `to_frame` maps the optical frame to the output frame.
pub fn backproject_depth(
    depth: &DepthMap,
    camera: &PinholeCamera,
    to_frame: &RigidTransform,
) -> PseudoPointSet {
    let w = depth.width as usize;
    let points = depth
        .values
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            if !z.is_finite() {
                return None;
            }
            let (col, row) = ((i % w) as f64, (i / w) as f64);
            camera
                .backproject_pixel(col, row, z)
                .ok()
                .map(|p| to_frame.apply_point(&p))
        })
        .collect();
    PseudoPointSet {
        width: depth.width,
        height: depth.height,
        points,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub id: u32,
    pub class: ObjectClass,
    /// Sensor frame of the scan.
    pub bbox: OrientedBox,
    pub points_inside: u32,
}

/// One label per detectable object, in the scan's sensor frame, with the
/// number of returns inside the box (faces included, see [`SURFACE_MARGIN`]).
pub fn ground_truth(scene: &Scene, scan: &LidarScan) -> Vec<GroundTruthBox> {
    let to_sensor = scan.sensor_pose.inverse();
    let yaw_offset = to_sensor.yaw();
    scene
        .objects()
        .iter()
        .enumerate()
        .filter(|(_, o)| o.class.is_detectable())
        .map(|(i, o)| {
            let world = scene.label_box(i);
            let bbox = OrientedBox {
                center: to_sensor.apply_point(&world.center),
                yaw: crate::geometry::normalize_angle(world.yaw + yaw_offset),
                ..*world
            };
            let points_inside = scan
                .points()
                .filter(|p| bbox.contains(p, SURFACE_MARGIN))
                .count() as u32;
            GroundTruthBox {
                id: o.id,
                class: o.class,
                bbox,
                points_inside,
            }
        })
        .collect()
}

/// For shared-geometry checks: every noise-free return must land within one
/// pixel of a depth pixel whose depth differs by less than `depth_tol`.
/// Returns the number of in-image returns that fail.
pub fn depth_consistency_failures(
    scan: &LidarScan,
    depth: &DepthMap,
    camera: &PinholeCamera,
    sensor_to_camera: &RigidTransform,
    depth_tol: f64,
) -> (usize, usize) {
    let mut checked = 0;
    let mut failed = 0;
    for r in &scan.returns {
        let pc = sensor_to_camera.apply_point(&r.point);
        let Ok((u, v, z)) = camera.project_point(&pc) else {
            continue;
        };
        let Some((col, row)) = camera.pixel_of(u, v) else {
            continue;
        };
        checked += 1;
        let mut ok = false;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (c, rr) = (col as i64 + dc, row as i64 + dr);
                if c < 0 || rr < 0 || c >= depth.width as i64 || rr >= depth.height as i64 {
                    continue;
                }
                let d = depth.get(c as u32, rr as u32);
                if d.is_finite() && (d - z).abs() < depth_tol {
                    ok = true;
                }
            }
        }
        if !ok {
            failed += 1;
        }
    }
    (checked, failed)
}
