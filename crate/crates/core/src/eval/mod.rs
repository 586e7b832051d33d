//! KITTI-style evaluation: rotated IoU, greedy matching, interpolated AP
//! and point-count difficulty bins.

mod iou;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::{read_labels, DatasetError, DatasetManifest, LabelRecord};
use crate::geometry::OrientedBox;

pub use iou::{bev_iou, clip_convex, footprint_intersection, iou_3d, signed_area};

/// The only evaluated class.
pub const EVAL_CLASS: &str = "Car";
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("bad difficulty thresholds: easy {easy} must exceed moderate {moderate}")]
    BadThresholds { easy: u32, moderate: u32 },
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("non-finite detection score in {0}")]
    BadScore(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        }
    }
}

/// Minimum LiDAR point counts for the easy and moderate bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyThresholds {
    pub easy: u32,
    pub moderate: u32,
}

impl Default for DifficultyThresholds {
    fn default() -> Self {
        Self {
            easy: 100,
            moderate: 20,
        }
    }
}

impl DifficultyThresholds {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.easy > self.moderate {
            Ok(())
        } else {
            Err(EvalError::BadThresholds {
                easy: self.easy,
                moderate: self.moderate,
            })
        }
    }
}

/// `count >= easy` is easy, `count >= moderate` is moderate, anything less is hard.
pub fn assign_difficulty(count: u32, t: &DifficultyThresholds) -> Result<Difficulty, EvalError> {
    t.validate()?;
    Ok(if count >= t.easy {
        Difficulty::Easy
    } else if count >= t.moderate {
        Difficulty::Moderate
    } else {
        Difficulty::Hard
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: OrientedBox,
    pub difficulty: Difficulty,
    pub num_points: u32,
}

impl GroundTruth {
    pub fn new(bbox: OrientedBox, num_points: u32, t: &DifficultyThresholds) -> Result<Self, EvalError> {
        Ok(Self {
            bbox,
            difficulty: assign_difficulty(num_points, t)?,
            num_points,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouMode {
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

impl IouMode {
    pub const ALL: [IouMode; 2] = [IouMode::Bev, IouMode::ThreeD];

    pub fn iou(self, a: &OrientedBox, b: &OrientedBox) -> f64 {
        match self {
            IouMode::Bev => bev_iou(a, b),
            IouMode::ThreeD => iou_3d(a, b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IouMode::Bev => "bev",
            IouMode::ThreeD => "3d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched a ground truth harder than the evaluated difficulty.
    Ignored,
}

/// Greedy matching within one frame. Returns each detection's outcome in
/// input order and the number of ground truths counted at `difficulty`.
pub fn match_frame(
    detections: &[Detection],
    gts: &[GroundTruth],
    mode: IouMode,
    threshold: f64,
    difficulty: Difficulty,
) -> (Vec<MatchOutcome>, usize) {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut outcome = vec![MatchOutcome::FalsePositive; detections.len()];
    for &d in &order {
        let mut best: Option<(f64, usize)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = mode.iou(&detections[d].bbox, &gt.bbox);
            if iou >= threshold && best.map_or(true, |(b, _)| iou > b) {
                best = Some((iou, g));
            }
        }
        if let Some((_, g)) = best {
            taken[g] = true;
            outcome[d] = if gts[g].difficulty <= difficulty {
                MatchOutcome::TruePositive
            } else {
                MatchOutcome::Ignored
            };
        }
    }
    let counted = gts.iter().filter(|g| g.difficulty <= difficulty).count();
    (outcome, counted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision/recall after each scored detection, highest score first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub num_gt: usize,
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Builds the curve from `(score, outcome)` pairs already in ranking order.
    pub fn from_ranked(ranked: &[(f64, MatchOutcome)], num_gt: usize) -> Self {
        let mut points = Vec::new();
        if num_gt > 0 {
            let (mut tp, mut fp) = (0usize, 0usize);
            for &(score, o) in ranked {
                match o {
                    MatchOutcome::TruePositive => tp += 1,
                    MatchOutcome::FalsePositive => fp += 1,
                    MatchOutcome::Ignored => continue,
                }
                points.push(PrPoint {
                    score,
                    recall: tp as f64 / num_gt as f64,
                    precision: tp as f64 / (tp + fp) as f64,
                });
            }
        }
        Self { num_gt, points }
    }
}

/// Single-frame matching followed by the PR sweep.
pub fn match_and_pr(
    detections: &[Detection],
    gts: &[GroundTruth],
    mode: IouMode,
    threshold: f64,
    difficulty: Difficulty,
) -> PrCurve {
    pr_over_frames(&[(detections.to_vec(), gts.to_vec())], mode, threshold, difficulty)
}

/// Matches every frame independently, then ranks all detections by score.
/// Ties are broken by `(frame, detection)` position.
pub fn pr_over_frames(
    frames: &[(Vec<Detection>, Vec<GroundTruth>)],
    mode: IouMode,
    threshold: f64,
    difficulty: Difficulty,
) -> PrCurve {
    let per_frame: Vec<(Vec<MatchOutcome>, usize)> = frames
        .par_iter()
        .map(|(d, g)| match_frame(d, g, mode, threshold, difficulty))
        .collect();
    let num_gt = per_frame.iter().map(|(_, n)| n).sum();
    let mut ranked: Vec<(f64, usize, usize, MatchOutcome)> = Vec::new();
    for (f, (outcomes, _)) in per_frame.iter().enumerate() {
        for (d, &o) in outcomes.iter().enumerate() {
            ranked.push((frames[f].0[d].score, f, d, o));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let ranked: Vec<(f64, MatchOutcome)> = ranked.into_iter().map(|r| (r.0, r.3)).collect();
    PrCurve::from_ranked(&ranked, num_gt)
}

/// Recall sampling grid for interpolated AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ApPoints {
    /// {0, 0.1, ..., 1.0}
    #[default]
    Eleven,
    /// {1/40, 2/40, ..., 1.0}
    Forty,
}

impl ApPoints {
    pub fn recall_grid(self) -> Vec<f64> {
        match self {
            ApPoints::Eleven => (0..=10).map(|i| i as f64 / 10.0).collect(),
            ApPoints::Forty => (1..=40).map(|i| i as f64 / 40.0).collect(),
        }
    }

    pub fn count(self) -> usize {
        match self {
            ApPoints::Eleven => 11,
            ApPoints::Forty => 40,
        }
    }
}

impl std::str::FromStr for ApPoints {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "11" => Ok(ApPoints::Eleven),
            "40" => Ok(ApPoints::Forty),
            _ => Err(format!("AP points must be 11 or 40, got {s:?}")),
        }
    }
}

/// Interpolated AP in percent: mean over the recall grid of the best
/// precision reached at or beyond each recall level.
pub fn average_precision(pr: &PrCurve, points: ApPoints) -> f64 {
    let interp: Vec<f64> = points
        .recall_grid()
        .into_iter()
        .map(|r| {
            pr.points
                .iter()
                .filter(|p| p.recall >= r)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .collect();
    // Mean as an offset from the first term, so a constant sequence is reproduced exactly.
    let first = interp[0];
    let mean = first + interp.iter().map(|v| v - first).sum::<f64>() / interp.len() as f64;
    mean * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub metric: IouMode,
    pub difficulty: Difficulty,
    pub ap: f64,
    pub pr: PrCurve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub thresholds: DifficultyThresholds,
    pub ap_points: ApPoints,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            thresholds: DifficultyThresholds::default(),
            ap_points: ApPoints::Eleven,
        }
    }
}

/// The BEV / 3D by easy / moderate / hard grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApTable {
    pub class: String,
    pub config: EvalConfig,
    pub frames: usize,
    pub results: Vec<ApResult>,
}

impl ApTable {
    pub fn get(&self, metric: IouMode, difficulty: Difficulty) -> Option<&ApResult> {
        self.results
            .iter()
            .find(|r| r.metric == metric && r.difficulty == difficulty)
    }

    pub fn ap(&self, metric: IouMode, difficulty: Difficulty) -> f64 {
        self.get(metric, difficulty).map_or(0.0, |r| r.ap)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,easy,moderate,hard\n");
        for m in IouMode::ALL {
            out.push_str(m.as_str());
            for d in Difficulty::ALL {
                out.push_str(&format!(",{:.4}", self.ap(m, d)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialises")
    }
}

impl fmt::Display for ApTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} AP ({} frames)", self.class, self.frames)?;
        writeln!(f, "{:<6}{:>10}{:>10}{:>10}", "", "easy", "moderate", "hard")?;
        for m in IouMode::ALL {
            write!(f, "{:<6}", m.as_str())?;
            for d in Difficulty::ALL {
                write!(f, "{:>10.2}", self.ap(m, d))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Evaluates per-frame detections against ground truth.
pub fn evaluate_frames(
    frames: &[(Vec<Detection>, Vec<GroundTruth>)],
    cfg: &EvalConfig,
) -> Result<ApTable, EvalError> {
    cfg.thresholds.validate()?;
    let mut results = Vec::new();
    for metric in IouMode::ALL {
        for difficulty in Difficulty::ALL {
            let pr = pr_over_frames(frames, metric, cfg.iou_threshold, difficulty);
            results.push(ApResult {
                metric,
                difficulty,
                ap: average_precision(&pr, cfg.ap_points),
                pr,
            });
        }
    }
    Ok(ApTable {
        class: EVAL_CLASS.to_string(),
        config: cfg.clone(),
        frames: frames.len(),
        results,
    })
}

/// Ground truth of the evaluated class for every manifest frame, keyed by id.
pub fn load_ground_truth(
    manifest: &DatasetManifest,
    root: &Path,
    t: &DifficultyThresholds,
) -> Result<BTreeMap<String, Vec<GroundTruth>>, EvalError> {
    let mut out = BTreeMap::new();
    for frame in &manifest.frames {
        let path = root.join(&frame.labels);
        let labels: Vec<LabelRecord> = read_labels(&path)?
            .into_iter()
            .filter(|l| !l.is_dont_care())
            .collect();
        if labels.len() != frame.num_lidar_pts.len() {
            return Err(EvalError::FrameMismatch(format!(
                "frame {}: {} labels but {} point counts",
                frame.id,
                labels.len(),
                frame.num_lidar_pts.len()
            )));
        }
        let ext = frame
            .sensor
            .lidar_to_camera
            .to_transform()
            .map_err(|e| EvalError::FrameMismatch(format!("frame {}: {e}", frame.id)))?;
        let mut gts = Vec::new();
        for (label, &count) in labels.iter().zip(&frame.num_lidar_pts) {
            if label.class != EVAL_CLASS {
                continue;
            }
            let bbox = label.to_box(&ext).ok_or_else(|| {
                EvalError::FrameMismatch(format!("frame {}: degenerate label box", frame.id))
            })?;
            gts.push(GroundTruth::new(bbox, count, t)?);
        }
        out.insert(frame.id.clone(), gts);
    }
    Ok(out)
}

/// Reads `<id>.txt` detection files (label format plus a trailing score).
/// A missing file means no detections for that frame; a file whose id is
/// not in the manifest is an error.
pub fn load_detections(
    manifest: &DatasetManifest,
    dir: &Path,
) -> Result<BTreeMap<String, Vec<Detection>>, EvalError> {
    let ids: BTreeMap<&str, _> = manifest.frames.iter().map(|f| (f.id.as_str(), f)).collect();
    let entries = std::fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| DatasetError::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        names.push(path);
    }
    names.sort();
    let mut out: BTreeMap<String, Vec<Detection>> =
        ids.keys().map(|id| (id.to_string(), Vec::new())).collect();
    for path in names {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let frame = ids.get(id.as_str()).ok_or_else(|| {
            EvalError::FrameMismatch(format!("{}: no frame {id:?} in manifest", path.display()))
        })?;
        let ext = frame
            .sensor
            .lidar_to_camera
            .to_transform()
            .map_err(|e| EvalError::FrameMismatch(format!("frame {id}: {e}")))?;
        let mut dets = Vec::new();
        for label in read_labels(&path)? {
            if label.class != EVAL_CLASS {
                continue;
            }
            let score = label.score.unwrap_or(1.0);
            if !score.is_finite() {
                return Err(EvalError::BadScore(path.display().to_string()));
            }
            if let Some(bbox) = label.to_box(&ext) {
                dets.push(Detection { bbox, score });
            }
        }
        out.insert(id, dets);
    }
    Ok(out)
}

/// Full evaluation of a detection directory against a dataset.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    root: &Path,
    detections_dir: &Path,
    cfg: &EvalConfig,
) -> Result<ApTable, EvalError> {
    cfg.thresholds.validate()?;
    let gts = load_ground_truth(manifest, root, &cfg.thresholds)?;
    let mut dets = load_detections(manifest, detections_dir)?;
    let frames: Vec<(Vec<Detection>, Vec<GroundTruth>)> = gts
        .into_iter()
        .map(|(id, g)| (dets.remove(&id).unwrap_or_default(), g))
        .collect();
    evaluate_frames(&frames, cfg)
}

#[cfg(test)]
mod tests;
