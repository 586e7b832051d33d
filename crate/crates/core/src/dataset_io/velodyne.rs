//! KITTI Velodyne scans: packed little-endian `f32` quadruples `(x, y, z, intensity)`.

use super::DatasetError;
use crate::geometry::Vec3;
use std::path::Path;

/// Intensity written for synthetic points.
pub const SYNTHETIC_INTENSITY: f32 = 1.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VelodyneFrame {
    pub points: Vec<[f32; 4]>,
}

impl VelodyneFrame {
    pub fn from_positions<'a>(positions: impl IntoIterator<Item = &'a Vec3>) -> Self {
        Self {
            points: positions
                .into_iter()
                .map(|p| [p.x as f32, p.y as f32, p.z as f32, SYNTHETIC_INTENSITY])
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points
            .iter()
            .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.points
            .iter()
            .flat_map(|p| p.iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() % 16 != 0 {
            return Err(format!("length {} is not a multiple of 16", bytes.len()));
        }
        let points = bytes
            .chunks_exact(16)
            .map(|chunk| {
                let mut p = [0f32; 4];
                for (k, b) in chunk.chunks_exact(4).enumerate() {
                    p[k] = f32::from_le_bytes(b.try_into().expect("4-byte chunk"));
                }
                p
            })
            .collect();
        Ok(Self { points })
    }
}

pub fn read_velodyne(path: &Path) -> Result<VelodyneFrame, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    VelodyneFrame::from_bytes(&bytes).map_err(|reason| DatasetError::MalformedFile {
        path: path.display().to_string(),
        reason,
    })
}

pub fn write_velodyne(frame: &VelodyneFrame, path: &Path) -> Result<(), DatasetError> {
    super::write_file(path, &frame.to_bytes())
}
