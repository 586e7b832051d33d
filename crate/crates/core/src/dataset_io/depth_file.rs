//! Depth maps as single-channel PFM images (`Pf`), stored bottom row first.
//! No-hit pixels are written as `+inf`.

use super::DatasetError;
use crate::scene_sim::DepthMap;
use std::path::Path;

pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).into_bytes();
    let w = depth.width as usize;
    for row in (0..depth.height as usize).rev() {
        for v in &depth.values[row * w..(row + 1) * w] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap, String> {
    // three whitespace-terminated header tokens after the magic line
    let mut pos = 0;
    let mut token = || -> Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        let t = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1;
        Ok(t)
    };
    if token()? != "Pf" {
        return Err("not a single-channel PFM file".into());
    }
    let width: u32 = token()?.parse().map_err(|_| "bad width")?;
    let height: u32 = token()?.parse().map_err(|_| "bad height")?;
    let scale: f64 = token()?.parse().map_err(|_| "bad scale")?;
    drop(token);
    let data = &bytes[pos.min(bytes.len())..];
    let n = width as usize * height as usize;
    if data.len() != 4 * n {
        return Err(format!("expected {} data bytes, found {}", 4 * n, data.len()));
    }
    let little = scale < 0.0;
    let w = width as usize;
    let mut values = vec![0.0; n];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().expect("4-byte chunk");
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (i / w, i % w);
        let row = height as usize - 1 - file_row;
        values[row * w + col] = v as f64;
    }
    Ok(DepthMap {
        width,
        height,
        values,
    })
}

pub fn read_depth(path: &Path) -> Result<DepthMap, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    decode_pfm(&bytes).map_err(|reason| DatasetError::MalformedFile {
        path: path.display().to_string(),
        reason,
    })
}

pub fn write_depth(depth: &DepthMap, path: &Path) -> Result<(), DatasetError> {
    super::write_file(path, &encode_pfm(depth))
}
