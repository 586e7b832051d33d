//! Rotated-box overlap: convex polygon clipping in the ground plane.

use crate::geometry::OrientedBox;

pub type Polygon = Vec<[f64; 2]>;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area (positive for counter-clockwise vertices).
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Sutherland–Hodgman: `subject` clipped by the convex counter-clockwise polygon `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Polygon {
    let mut out: Polygon = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % m]);
        let input = std::mem::take(&mut out);
        let n = input.len();
        for j in 0..n {
            let (p, q) = (input[j], input[(j + 1) % n]);
            let (sp, sq) = (cross(a, b, p), cross(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

/// Area of the intersection of the two ground footprints.
pub fn footprint_intersection(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let reach = |x: &OrientedBox| 0.5 * x.length.hypot(x.width);
    let dc = (a.center.x - b.center.x).hypot(a.center.y - b.center.y);
    if dc > reach(a) + reach(b) {
        return 0.0;
    }
    let poly = clip_convex(&a.footprint(), &b.footprint());
    if poly.len() < 3 {
        0.0
    } else {
        signed_area(&poly).abs()
    }
}

/// Bird's-eye-view IoU of the yawed footprints.
pub fn bev_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let inter = footprint_intersection(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.length * a.width + b.length * b.width - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Volumetric IoU of two boxes that rotate about the vertical axis only.
pub fn iou_3d(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    let dz = a1.min(b1) - a0.max(b0);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = footprint_intersection(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.volume() + b.volume() - inter)).clamp(0.0, 1.0)
}
