//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string; the page in `www/` draws the results on canvases.

use lgsim::da::{toy_adversarial_train, DaError, GrlConfig, TrainConfig};
use lgsim::eval::{bev_iou, clip_convex, iou_3d};
use lgsim::geometry::{OrientedBox, Vec3};
use lgsim::sampling::{lidar_guided_sample, DMinPolicy, SamplerConfig};
use lgsim::scene_sim::{generate_scene, raycast_lidar, render_depth, CameraSpec, ProceduralOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct SamplingView {
    pub width: u32,
    pub height: u32,
    /// `[col, row]` of each LiDAR pixel.
    pub lidar: Vec<[u32; 2]>,
    /// `[col, row]` of each kept pseudo pixel.
    pub kept: Vec<[u32; 2]>,
    pub depth_pixels: usize,
    pub augmented: usize,
}

/// A half-resolution street frame sampled with `d_min` pixels, or with the
/// per-point policy when `d_min` is negative.
pub fn sampling_view(seed: u64, cars: usize, d_min: f64) -> Result<SamplingView, String> {
    let mut cfg = generate_scene(
        seed,
        &ProceduralOptions {
            cars,
            ..ProceduralOptions::default()
        },
    );
    cfg.camera = CameraSpec {
        fx: 360.75,
        fy: 360.75,
        cx: 304.8,
        cy: 86.45,
        width: 621,
        height: 188,
        ..CameraSpec::default()
    };
    let scene = cfg.build_scene().map_err(|e| e.to_string())?;
    let camera = cfg.camera.camera().map_err(|e| e.to_string())?;
    let scan = raycast_lidar(&scene, &cfg.lidar.to_config(seed)).map_err(|e| e.to_string())?;
    let depth = render_depth(&scene, &camera, &cfg.camera.optical_pose());
    let sampler = SamplerConfig {
        d_min: if d_min < 0.0 {
            DMinPolicy::PerPoint
        } else {
            DMinPolicy::Constant(d_min)
        },
        seed,
        ..SamplerConfig::default()
    };
    let cloud = lidar_guided_sample(&scan, &depth, &camera, &cfg.lidar_to_camera(), &sampler)
        .map_err(|e| e.to_string())?;
    Ok(SamplingView {
        width: camera.width,
        height: camera.height,
        lidar: cloud.guide_pixels.iter().map(|p| [p.col, p.row]).collect(),
        kept: cloud.pseudo_kept.iter().map(|p| [p.col, p.row]).collect(),
        depth_pixels: depth.hit_count(),
        augmented: cloud.augmented.len(),
    })
}

#[derive(Debug, Serialize)]
pub struct IouView {
    pub bev: f64,
    pub iou_3d: f64,
    pub footprint_a: Vec<[f64; 2]>,
    pub footprint_b: Vec<[f64; 2]>,
    pub intersection: Vec<[f64; 2]>,
}

/// Boxes as `[x, y, z, length, width, height, yaw]`.
pub fn iou_view(a: &[f64], b: &[f64]) -> Result<IouView, String> {
    let boxed = |v: &[f64]| -> Result<OrientedBox, String> {
        if v.len() != 7 {
            return Err(format!("a box needs 7 numbers, got {}", v.len()));
        }
        OrientedBox::new(Vec3::new(v[0], v[1], v[2]), v[3], v[4], v[5], v[6]).map_err(|e| e.to_string())
    };
    let (a, b) = (boxed(a)?, boxed(b)?);
    let (fa, fb) = (a.footprint(), b.footprint());
    Ok(IouView {
        bev: bev_iou(&a, &b),
        iou_3d: iou_3d(&a, &b),
        footprint_a: fa.to_vec(),
        footprint_b: fb.to_vec(),
        intersection: clip_convex(&fa, &fb),
    })
}

#[derive(Debug, Serialize)]
pub struct TrainView {
    pub source_task_accuracy: f64,
    pub target_task_accuracy: f64,
    pub domain_accuracy: f64,
    /// Per-epoch `[detection, adaptation sum, total]`.
    pub losses: Vec<[f64; 3]>,
    pub diverged_at_epoch: Option<usize>,
}

pub fn train_view(lambda: f64, r: f64, epochs: usize, seed: u64) -> Result<TrainView, String> {
    let mut cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    cfg.loss.lambda = lambda;
    cfg.loss.grl = GrlConfig::new(r).map_err(|e| e.to_string())?;
    let report = match toy_adversarial_train(&cfg) {
        Ok(r) => r,
        Err(DaError::DivergedTraining { report, .. }) => *report,
        Err(e) => return Err(e.to_string()),
    };
    Ok(TrainView {
        source_task_accuracy: report.source_task_accuracy,
        target_task_accuracy: report.target_task_accuracy,
        domain_accuracy: report.domain_accuracy,
        losses: report
            .epochs
            .iter()
            .map(|e| [e.detection, e.sample + e.anchor + e.consistency, e.total])
            .collect(),
        diverged_at_epoch: report.diverged_at_epoch,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sampleScene)]
pub fn sample_scene(seed: u32, cars: u32, d_min: f64) -> Result<String, JsError> {
    to_js(sampling_view(seed as u64, cars as usize, d_min))
}

#[wasm_bindgen(js_name = boxIou)]
pub fn box_iou(a: Vec<f64>, b: Vec<f64>) -> Result<String, JsError> {
    to_js(iou_view(&a, &b))
}

#[wasm_bindgen(js_name = trainToy)]
pub fn train_toy(lambda: f64, r: f64, epochs: u32, seed: u32) -> Result<String, JsError> {
    to_js(train_view(lambda, r, epochs as usize, seed as u64))
}
