//! Geometric primitives shared by every other module.
//!
//! Frames used throughout the crate:
//!
//! * sensor / world frame: `+x` forward, `+y` left, `+z` up (vertical axis for yaw).
//! * camera (optical) frame: `+z` forward, `+x` right, `+y` down.
//! * pixel `(u, v)` = (column, row); pixel `(c, r)` is centred on the continuous
//!   coordinate `(c, r)` and covers `[c - 0.5, c + 0.5) x [r - 0.5, r + 0.5)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance on `R^T R = I` and `det R = 1` when validating rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("ray direction has zero length")]
    ZeroDirection,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

fn yaw_matrix(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// A proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite entry".into()));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        let ortho_err = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if ortho_err > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation is not orthonormal (max |R^T R - I| = {ortho_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about the vertical axis followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vec3) -> Self {
        Self {
            rotation: yaw_matrix(yaw),
            translation,
        }
    }

    /// Intrinsic roll-pitch-yaw (`R = Rz(yaw) Ry(pitch) Rx(roll)`).
    pub fn from_roll_pitch_yaw(roll: f64, pitch: f64, yaw: f64, translation: Vec3) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
        Self {
            rotation: yaw_matrix(yaw) * ry * rx,
            translation,
        }
    }

    /// Axis permutation taking sensor coordinates (x forward, y left, z up)
    /// to optical coordinates (z forward, x right, y down). No translation.
    pub fn sensor_to_optical() -> Self {
        Self {
            rotation: Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0),
            translation: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `self.compose(other)` applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Heading of the rotated x axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// True when the rotation only turns about the vertical axis.
    pub fn is_yaw_only(&self, tol: f64) -> bool {
        let r = &self.rotation;
        r[(2, 0)].abs() <= tol
            && r[(2, 1)].abs() <= tol
            && r[(0, 2)].abs() <= tol
            && r[(1, 2)].abs() <= tol
            && (r[(2, 2)] - 1.0).abs() <= tol
    }

    /// Largest absolute deviation of this transform from the identity.
    pub fn distance_from_identity(&self) -> f64 {
        let rot = (self.rotation - Matrix3::identity())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tr = self.translation.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rot.max(tr)
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(GeometryError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidCamera(
                "image size must be positive".into(),
            ));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidCamera(format!(
                "cx = {} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidCamera(format!(
                "cy = {} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Camera-frame point to `(u, v, depth)`. Bounds are not checked.
    pub fn project_point(&self, p: &Vec3) -> Result<(f64, f64, f64), GeometryError> {
        if !(p.z > 0.0) {
            return Err(GeometryError::BehindCamera(p.z));
        }
        Ok((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        ))
    }

    /// Inverse of [`project_point`](Self::project_point); `depth` is the z coordinate.
    pub fn backproject_pixel(&self, u: f64, v: f64, depth: f64) -> Result<Vec3, GeometryError> {
        if !(depth > 0.0) {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        Ok(Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ))
    }

    /// Unit direction in the camera frame through continuous pixel `(u, v)`.
    pub fn pixel_ray_direction(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }

    /// Integer pixel containing continuous coordinate `(u, v)`, if inside the image.
    pub fn pixel_of(&self, u: f64, v: f64) -> Option<(u32, u32)> {
        let col = (u + 0.5).floor();
        let row = (v + 0.5).floor();
        if col >= 0.0 && row >= 0.0 && col < self.width as f64 && row < self.height as f64 {
            Some((col as u32, row as u32))
        } else {
            None
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Cuboid with a vertical yaw axis. `center` is the geometric centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(
        center: Vec3,
        length: f64,
        width: f64,
        height: f64,
        yaw: f64,
    ) -> Result<Self, GeometryError> {
        if !(length > 0.0 && width > 0.0 && height > 0.0) {
            return Err(GeometryError::InvalidBox(format!(
                "dimensions must be positive, got {length} x {width} x {height}"
            )));
        }
        if !center.iter().all(|v| v.is_finite()) || !yaw.is_finite() {
            return Err(GeometryError::InvalidBox("non-finite pose".into()));
        }
        Ok(Self {
            center,
            length,
            width,
            height,
            yaw: normalize_angle(yaw),
        })
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(self.length / 2.0, self.width / 2.0, self.height / 2.0)
    }

    /// Box-local to world transform.
    pub fn pose(&self) -> RigidTransform {
        RigidTransform::from_yaw(self.yaw, self.center)
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center;
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Containment with the faces pushed outward by `margin`; `margin = 0` is strict interior.
    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        let local = self.to_local(p);
        let h = self.half_extents();
        local.x.abs() < h.x + margin && local.y.abs() < h.y + margin && local.z.abs() < h.z + margin
    }

    /// Same box scaled about the world origin by `s`.
    pub fn scaled(&self, s: f64) -> OrientedBox {
        OrientedBox {
            center: self.center * s,
            length: self.length * s,
            width: self.width * s,
            height: self.height * s,
            yaw: self.yaw,
        }
    }

    pub fn z_range(&self) -> (f64, f64) {
        (
            self.center.z - self.height / 2.0,
            self.center.z + self.height / 2.0,
        )
    }

    /// Ground footprint corners, counter-clockwise, starting at the front-left corner.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[x, y]| {
            [
                self.center.x + c * x - s * y,
                self.center.y + s * x + c * y,
            ]
        })
    }

    /// Closed triangle mesh of the box surface (12 outward-facing triangles).
    pub fn tessellate(&self) -> TriangleMesh {
        let vertices = box_corners(self).to_vec();
        #[rustfmt::skip]
        let faces = vec![
            [0, 2, 1], [0, 3, 2], // bottom
            [4, 5, 6], [4, 6, 7], // top
            [0, 1, 5], [0, 5, 4], // left (+y)
            [1, 2, 6], [1, 6, 5], // rear (-x)
            [2, 3, 7], [2, 7, 6], // right (-y)
            [3, 0, 4], [3, 4, 7], // front (+x)
        ];
        TriangleMesh { vertices, faces }
    }
}

/// The eight corners of `b`.
///
/// Indices 0..4 are the bottom face and 4..8 the top face; within each face
/// the order follows [`OrientedBox::footprint`] (front-left, rear-left,
/// rear-right, front-right), so corner `i + 4` sits directly above corner `i`.
pub fn box_corners(b: &OrientedBox) -> [Vec3; 8] {
    let fp = b.footprint();
    let (z0, z1) = b.z_range();
    let mut out = [Vec3::zeros(); 8];
    for (i, [x, y]) in fp.iter().enumerate() {
        out[i] = Vec3::new(*x, *y, z0);
        out[i + 4] = Vec3::new(*x, *y, z1);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    direction: Vec3,
}

impl Ray {
    /// Normalises `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(GeometryError::ZeroDirection);
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn direction(&self) -> &Vec3 {
        &self.direction
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Ray {
        Ray {
            origin: tf.apply_point(&self.origin),
            direction: tf.apply_vector(&self.direction),
        }
    }
}

/// Möller–Trumbore. Returns the hit distance `t > 0`, if any.
pub fn ray_triangle_intersect(ray: &Ray, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    // parallel (relative to triangle scale)
    if det.abs() <= 1e-14 * e1.norm() * e2.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - tri[0];
    let a = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&a) {
        return None;
    }
    let q = s.cross(&e1);
    let b = ray.direction.dot(&q) * inv;
    if b < 0.0 || a + b > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

/// Slab test in the box frame. Returns the entry distance, or the exit
/// distance when the origin is inside the box.
pub fn ray_box_intersect(ray: &Ray, b: &OrientedBox) -> Option<f64> {
    let (s, c) = b.yaw.sin_cos();
    let o = b.to_local(&ray.origin);
    let d = ray.direction;
    let d = Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z);
    let h = b.half_extents();
    slab(&o, &d, &(-h), &h)
}

fn slab(o: &Vec3, d: &Vec3, lo: &Vec3, hi: &Vec3) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        if d[axis] == 0.0 {
            if o[axis] < lo[axis] || o[axis] > hi[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let mut t0 = (lo[axis] - o[axis]) * inv;
        let mut t1 = (hi[axis] - o[axis]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_far < t_near {
            return None;
        }
    }
    if t_near > 0.0 {
        Some(t_near)
    } else if t_far > 0.0 {
        Some(t_far)
    } else {
        None
    }
}

/// Axis-aligned bounds, used as an early-out for meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(Aabb { min, max })
    }

    /// True if the ray meets the box at any `t >= 0`.
    pub fn hit_by(&self, ray: &Ray) -> bool {
        let eps = Vec3::repeat(1e-9);
        slab(&ray.origin, &ray.direction, &(self.min - eps), &(self.max + eps)).is_some()
            || self.contains(&ray.origin)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.faces.is_empty() {
            return Err(GeometryError::InvalidMesh("mesh has no faces".into()));
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= self.vertices.len()) {
                return Err(GeometryError::InvalidMesh(format!(
                    "face {i} references a missing vertex"
                )));
            }
            if triangle_area(&self.triangle(i)) <= 0.0 {
                return Err(GeometryError::InvalidMesh(format!(
                    "face {i} is degenerate"
                )));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        (0..self.faces.len()).map(|i| self.triangle(i))
    }

    pub fn transformed(&self, tf: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| tf.apply_point(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Nearest hit over all faces.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        self.triangles()
            .filter_map(|t| ray_triangle_intersect(ray, &t))
            .min_by(f64::total_cmp)
    }
}

pub fn triangle_area(tri: &[Vec3; 3]) -> f64 {
    0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm()
}
