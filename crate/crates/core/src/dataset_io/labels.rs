//! KITTI object labels: one object per line, 15 space-separated fields
//! (16 for detections, the last being the score).
//!
//! Field order: class, truncated, occluded, alpha, bbox left/top/right/bottom,
//! height, width, length, x, y, z (camera frame, bottom-face centre), rotation_y.

use super::DatasetError;
use crate::geometry::{box_corners, normalize_angle, OrientedBox, PinholeCamera, RigidTransform, Vec3};
use std::fmt::Write as _;
use std::path::Path;

pub const DONT_CARE: &str = "DontCare";

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub class: String,
    pub truncated: f64,
    pub occluded: i32,
    pub alpha: f64,
    /// Left, top, right, bottom in pixels.
    pub bbox: [f64; 4],
    /// Height, width, length.
    pub dimensions: [f64; 3],
    /// Bottom-face centre in the camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

fn fixed(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

impl LabelRecord {
    pub fn dont_care(bbox: [f64; 4]) -> Self {
        Self {
            class: DONT_CARE.to_string(),
            truncated: -1.0,
            occluded: -1,
            alpha: -10.0,
            bbox,
            dimensions: [-1.0; 3],
            location: [-1000.0; 3],
            rotation_y: -10.0,
            score: None,
        }
    }

    pub fn is_dont_care(&self) -> bool {
        self.class == DONT_CARE
    }

    /// Label for a level box given in the sensor frame. `sensor_to_camera`
    /// maps sensor coordinates to the camera optical frame; with a camera the
    /// 2D box is the clipped projection of the corners, otherwise zeros.
    pub fn from_box(
        bbox: &OrientedBox,
        class: &str,
        sensor_to_camera: &RigidTransform,
        camera: Option<&PinholeCamera>,
    ) -> Self {
        let bottom = bbox.center - Vec3::new(0.0, 0.0, bbox.height / 2.0);
        let loc = sensor_to_camera.apply_point(&bottom);
        let heading = sensor_to_camera.apply_vector(&Vec3::new(bbox.yaw.cos(), bbox.yaw.sin(), 0.0));
        let rotation_y = normalize_angle((-heading.z).atan2(heading.x));
        let alpha = normalize_angle(rotation_y - loc.x.atan2(loc.z));
        let image_box = camera
            .and_then(|cam| project_box(bbox, sensor_to_camera, cam))
            .unwrap_or([0.0; 4]);
        Self {
            class: class.to_string(),
            truncated: 0.0,
            occluded: 0,
            alpha,
            bbox: image_box,
            dimensions: [bbox.height, bbox.width, bbox.length],
            location: [loc.x, loc.y, loc.z],
            rotation_y,
            score: None,
        }
    }

    /// Inverse of [`LabelRecord::from_box`]; `None` for `DontCare`.
    pub fn to_box(&self, sensor_to_camera: &RigidTransform) -> Option<OrientedBox> {
        if self.is_dont_care() {
            return None;
        }
        let to_sensor = sensor_to_camera.inverse();
        let [h, w, l] = self.dimensions;
        let bottom = to_sensor.apply_point(&Vec3::from(self.location));
        let heading = to_sensor.apply_vector(&Vec3::new(
            self.rotation_y.cos(),
            0.0,
            -self.rotation_y.sin(),
        ));
        OrientedBox::new(
            bottom + Vec3::new(0.0, 0.0, h / 2.0),
            l,
            w,
            h,
            heading.y.atan2(heading.x),
        )
        .ok()
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {} {} {}",
            self.class,
            fixed(self.truncated),
            self.occluded,
            fixed(self.alpha)
        );
        for v in self
            .bbox
            .iter()
            .chain(&self.dimensions)
            .chain(&self.location)
            .chain(std::iter::once(&self.rotation_y))
            .chain(self.score.as_ref())
        {
            write!(s, " {}", fixed(*v)).expect("write to string");
        }
        s
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 15 && fields.len() != 16 {
            return Err(format!("expected 15 or 16 fields, found {}", fields.len()));
        }
        let num = |i: usize| -> Result<f64, String> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| format!("field {}: `{}` is not a number", i + 1, fields[i]))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("field {}: non-finite value", i + 1))
            }
        };
        let occluded = num(2)?;
        if occluded.fract() != 0.0 {
            return Err(format!("field 3: occlusion `{}` is not an integer", fields[2]));
        }
        let record = Self {
            class: fields[0].to_string(),
            truncated: num(1)?,
            occluded: occluded as i32,
            alpha: num(3)?,
            bbox: [num(4)?, num(5)?, num(6)?, num(7)?],
            dimensions: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 { Some(num(15)?) } else { None },
        };
        if !record.is_dont_care() && record.dimensions.iter().any(|d| *d <= 0.0) {
            return Err("box dimensions must be positive".into());
        }
        Ok(record)
    }
}

/// Clipped image-plane bounds of the box, if every corner is in front of the camera.
fn project_box(
    bbox: &OrientedBox,
    sensor_to_camera: &RigidTransform,
    camera: &PinholeCamera,
) -> Option<[f64; 4]> {
    let mut out = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in box_corners(bbox) {
        let (u, v, _) = camera.project_point(&sensor_to_camera.apply_point(&c)).ok()?;
        out = [out[0].min(u), out[1].min(v), out[2].max(u), out[3].max(v)];
    }
    let (w, h) = ((camera.width - 1) as f64, (camera.height - 1) as f64);
    Some([
        out[0].clamp(0.0, w),
        out[1].clamp(0.0, h),
        out[2].clamp(0.0, w),
        out[3].clamp(0.0, h),
    ])
}

pub fn format_labels(records: &[LabelRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

pub fn parse_labels(text: &str, path: &str) -> Result<Vec<LabelRecord>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            LabelRecord::parse_line(l).map_err(|reason| DatasetError::MalformedLine {
                path: path.to_string(),
                line: i + 1,
                reason,
            })
        })
        .collect()
}

pub fn write_labels(records: &[LabelRecord], path: &Path) -> Result<(), DatasetError> {
    super::write_file(path, format_labels(records).as_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    parse_labels(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_box_golden_line() {
        let b = OrientedBox::new(Vec3::zeros(), 1.0, 1.0, 1.0, 0.0).unwrap();
        let rec = LabelRecord::from_box(&b, "Car", &RigidTransform::sensor_to_optical(), None);
        assert_eq!(
            rec.to_line(),
            "Car 0.000000 0 -1.570796 0.000000 0.000000 0.000000 0.000000 \
             1.000000 1.000000 1.000000 0.000000 0.500000 0.000000 -1.570796"
        );
    }

    #[test]
    fn dont_care_round_trip() {
        let rec = LabelRecord::dont_care([503.89, 169.71, 590.61, 190.13]);
        let line = rec.to_line();
        assert_eq!(
            line,
            "DontCare -1.000000 -1 -10.000000 503.890000 169.710000 590.610000 190.130000 \
             -1.000000 -1.000000 -1.000000 -1000.000000 -1000.000000 -1000.000000 -10.000000"
        );
        assert_eq!(LabelRecord::parse_line(&line).unwrap(), rec);
        assert!(rec.to_box(&RigidTransform::identity()).is_none());
    }

    #[test]
    fn malformed_lines() {
        assert!(LabelRecord::parse_line("Car 0 0").is_err());
        let good = "Car 0 0 0 0 0 0 0 1 1 1 0 0 0 0";
        assert!(LabelRecord::parse_line(good).is_ok());
        assert!(LabelRecord::parse_line(&good.replace(" 1 1 1 ", " 1 x 1 ")).is_err());
        assert!(LabelRecord::parse_line(&good.replace(" 1 1 1 ", " 1 0 1 ")).is_err());
        assert!(LabelRecord::parse_line(&good.replace("Car 0 0", "Car 0 0.5")).is_err());
        let err = parse_labels(&format!("{good}\nbad line\n"), "x.txt").unwrap_err();
        assert!(err.to_string().contains("x.txt:2"), "{err}");
    }

    #[test]
    fn detections_carry_a_score() {
        let mut rec = LabelRecord::from_box(
            &OrientedBox::new(Vec3::new(10.0, 1.0, -0.9), 4.0, 1.8, 1.5, 0.3).unwrap(),
            "Car",
            &RigidTransform::sensor_to_optical(),
            None,
        );
        rec.score = Some(0.875);
        let line = rec.to_line();
        assert_eq!(line.split(' ').count(), 16);
        assert!(line.ends_with(" 0.875000"));
        assert_eq!(LabelRecord::parse_line(&line).unwrap().score, Some(0.875));
    }

    #[test]
    fn random_boxes_survive_the_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ext = RigidTransform::sensor_to_optical()
            .compose(&RigidTransform::from_yaw(0.2, Vec3::new(0.3, -0.1, 0.05)));
        let cam = PinholeCamera::new(721.5, 721.5, 609.6, 172.9, 1242, 375).unwrap();
        for _ in 0..1000 {
            let b = OrientedBox::new(
                Vec3::new(
                    rng.gen_range(-40.0..40.0),
                    rng.gen_range(-40.0..40.0),
                    rng.gen_range(-3.0..3.0),
                ),
                rng.gen_range(0.5..12.0),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(-4.0..4.0),
            )
            .unwrap();
            let line = LabelRecord::from_box(&b, "Car", &ext, Some(&cam)).to_line();
            let back = LabelRecord::parse_line(&line).unwrap().to_box(&ext).unwrap();
            assert!((back.center - b.center).amax() < 1e-6, "{line}");
            for (x, y) in [(back.length, b.length), (back.width, b.width), (back.height, b.height)] {
                assert!((x - y).abs() < 1e-6);
            }
            assert!(normalize_angle(back.yaw - b.yaw).abs() < 1e-6, "{line}");
        }
    }
}
