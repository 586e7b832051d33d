//! Seeded procedural scenes and a low-poly car body.

use super::config::{GroundSpec, MountSpec, ObjectSpec, SceneConfig, ShapeSpec};
use super::ObjectClass;
use crate::geometry::{TriangleMesh, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hexahedron faces for corners ordered as in [`crate::geometry::box_corners`].
const HEX_FACES: [[usize; 3]; 12] = [
    [0, 2, 1],
    [0, 3, 2],
    [4, 5, 6],
    [4, 6, 7],
    [0, 1, 5],
    [0, 5, 4],
    [1, 2, 6],
    [1, 6, 5],
    [2, 3, 7],
    [2, 7, 6],
    [3, 0, 4],
    [3, 4, 7],
];

/// One layer of the body: `(x_rear, x_front, half_width)` at the bottom
/// (`z0`) and at the top (`z1`).
struct Layer {
    bottom: (f64, f64, f64),
    top: (f64, f64, f64),
    z0: f64,
    z1: f64,
}

impl Layer {
    fn append(&self, vertices: &mut Vec<Vec3>, faces: &mut Vec<[usize; 3]>) {
        let base = vertices.len();
        for ((x0, x1, hw), z) in [(self.bottom, self.z0), (self.top, self.z1)] {
            // front-left, rear-left, rear-right, front-right
            vertices.push(Vec3::new(x1, hw, z));
            vertices.push(Vec3::new(x0, hw, z));
            vertices.push(Vec3::new(x0, -hw, z));
            vertices.push(Vec3::new(x1, -hw, z));
        }
        faces.extend(HEX_FACES.iter().map(|f| f.map(|i| i + base)));
    }
}

/// A two-part car body (lower hull plus tapered cabin) whose axis-aligned
/// bounds are exactly `length x width x height`, centred on the origin.
pub fn car_mesh(length: f64, width: f64, height: f64) -> TriangleMesh {
    let (hl, hw, hh) = (length / 2.0, width / 2.0, height / 2.0);
    let z_mid = -hh + 0.55 * height;
    let mut vertices = Vec::with_capacity(16);
    let mut faces = Vec::with_capacity(24);
    let hull = Layer {
        bottom: (-hl, hl, hw),
        top: (-hl, hl, hw),
        z0: -hh,
        z1: z_mid,
    };
    let cabin = Layer {
        bottom: (-0.35 * length, 0.2 * length, 0.95 * hw),
        top: (-0.3 * length, 0.05 * length, 0.8 * hw),
        z0: z_mid,
        z1: hh,
    };
    hull.append(&mut vertices, &mut faces);
    cabin.append(&mut vertices, &mut faces);
    TriangleMesh::new(vertices, faces).expect("car mesh is well formed")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProceduralOptions {
    pub cars: usize,
    /// Forward distance range of car centres, metres.
    pub distance: (f64, f64),
    /// Walls flanking the road.
    pub walls: bool,
    /// Forward distance of a wall closing off the street, if any.
    pub backdrop: Option<f64>,
}

impl Default for ProceduralOptions {
    fn default() -> Self {
        Self {
            cars: 6,
            distance: (6.0, 35.0),
            walls: true,
            backdrop: None,
        }
    }
}

/// Cars scattered in the camera's field of view on a flat ground plane,
/// optionally flanked by two long walls. Deterministic in `seed`.
pub fn generate_scene(seed: u64, options: &ProceduralOptions) -> SceneConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = SceneConfig {
        ground: Some(GroundSpec { height: 0.0 }),
        ..SceneConfig::default()
    };
    let mut placed: Vec<(f64, f64)> = Vec::new();
    let mut id = 1;
    let mut attempts = 0;
    while placed.len() < options.cars && attempts < 1000 {
        attempts += 1;
        let x = rng.gen_range(options.distance.0..options.distance.1);
        // stay inside a ~70 degree horizontal cone
        let y = rng.gen_range(-0.6..0.6) * x;
        if y.abs() > 9.0 || placed.iter().any(|&(px, py)| (px - x).hypot(py - y) < 5.5) {
            continue;
        }
        let length = rng.gen_range(3.6..4.8);
        let width = rng.gen_range(1.6..1.95);
        let height = rng.gen_range(1.4..1.7);
        let yaw_deg = if rng.gen_bool(0.7) {
            rng.gen_range(-15.0..15.0) + if rng.gen_bool(0.5) { 0.0 } else { 180.0 }
        } else {
            rng.gen_range(-180.0..180.0)
        };
        let shape = if rng.gen_bool(0.6) {
            ShapeSpec::Car
        } else {
            ShapeSpec::Box
        };
        cfg.objects.push(ObjectSpec {
            id,
            class: ObjectClass::Car,
            shape,
            length: Some(length),
            width: Some(width),
            height: Some(height),
            pose: MountSpec::at(x, y, height / 2.0, yaw_deg),
            vertices: Vec::new(),
            faces: Vec::new(),
        });
        placed.push((x, y));
        id += 1;
    }
    let far = options.backdrop.unwrap_or(80.0);
    let wall = |id: u32, length: f64, width: f64, height: f64, x: f64, y: f64| ObjectSpec {
        id,
        class: ObjectClass::Misc,
        shape: ShapeSpec::Box,
        length: Some(length),
        width: Some(width),
        height: Some(height),
        pose: MountSpec::at(x, y, height / 2.0, 0.0),
        vertices: Vec::new(),
        faces: Vec::new(),
    };
    if options.walls {
        for side in [-1.0, 1.0] {
            cfg.objects.push(wall(id, far + 5.0, 0.5, 6.0, far / 2.0 - 2.5, side * 12.0));
            id += 1;
        }
    }
    if let Some(x) = options.backdrop {
        cfg.objects.push(wall(id, 0.5, 25.0, 8.0, x, 0.0));
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn car_mesh_bounds_match_dimensions() {
        let m = car_mesh(4.0, 1.8, 1.5);
        let b = m.aabb().unwrap();
        assert!((b.min - Vec3::new(-2.0, -0.9, -0.75)).norm() < 1e-12);
        assert!((b.max - Vec3::new(2.0, 0.9, 0.75)).norm() < 1e-12);
        assert_eq!(m.faces.len(), 24);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_scene(11, &ProceduralOptions::default());
        let b = generate_scene(11, &ProceduralOptions::default());
        assert_eq!(a, b);
        assert_ne!(a, generate_scene(12, &ProceduralOptions::default()));
        assert!(a.build_scene().is_ok());
        assert_eq!(
            a.objects.iter().filter(|o| o.class == ObjectClass::Car).count(),
            6
        );
    }
}
