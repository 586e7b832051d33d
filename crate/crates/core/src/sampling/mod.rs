//! LiDAR-guided sampling of a back-projected depth cloud.
//!
//! The LiDAR returns are projected into the image to form the guide set `L`.
//! Each guide is joined to its nearest guide neighbour by a supercover line;
//! the depth pixels on those lines form `D_aug`. A greedy nearest-neighbour
//! walk over `D_s ∪ D_aug` then thins the pseudo points using a spacing
//! threshold `d_min`, and the survivors `P_s` are merged with the LiDAR
//! points into the output cloud `P`.

mod index;
pub mod raster;

use crate::geometry::{PinholeCamera, RigidTransform, Vec3};
use crate::scene_sim::{backproject_depth, DepthMap, LidarScan, PseudoPointSet};
use index::{PixelIndex, PointGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplingError {
    #[error("no LiDAR return projects into the image")]
    EmptyGuide,
    #[error("at least two distinct guide pixels are required, got {0}")]
    DegenerateGuide(usize),
    #[error("the LiDAR pixel set is empty")]
    EmptySampledSet,
    #[error("density statistics need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid d_min policy `{0}` (expected `per-point` or `const:<px>`)")]
    BadPolicy(String),
}

/// Integer image pixel. Ordered by `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Pixel {
    pub row: u32,
    pub col: u32,
}

impl Pixel {
    pub const fn new(col: u32, row: u32) -> Self {
        Self { row, col }
    }

    pub fn dist2(&self, other: &Pixel) -> i64 {
        let dc = self.col as i64 - other.col as i64;
        let dr = self.row as i64 - other.row as i64;
        dc * dc + dr * dr
    }

    pub fn dist(&self, other: &Pixel) -> f64 {
        (self.dist2(other) as f64).sqrt()
    }

    /// Distance in pixels to the nearest image border.
    pub fn border_distance(&self, width: u32, height: u32) -> u32 {
        self.col
            .min(self.row)
            .min(width - 1 - self.col)
            .min(height - 1 - self.row)
    }

    fn as_point(&self) -> [f64; 2] {
        [self.col as f64, self.row as f64]
    }
}

impl fmt::Display for Pixel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuideEntry {
    /// Continuous image coordinate `(u, v)`.
    pub uv: [f64; 2],
    pub pixel: Pixel,
    /// The LiDAR return, sensor frame.
    pub source: Vec3,
}

/// LiDAR returns projected into the image.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidePointSet {
    pub width: u32,
    pub height: u32,
    pub entries: Vec<GuideEntry>,
}

impl GuidePointSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pixels(&self) -> BTreeSet<Pixel> {
        self.entries.iter().map(|e| e.pixel).collect()
    }

    fn uvs(&self) -> Vec<[f64; 2]> {
        self.entries.iter().map(|e| e.uv).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DMinPolicy {
    /// Distance from each pseudo point to its nearest LiDAR pixel.
    PerPoint,
    Constant(f64),
}

impl FromStr for DMinPolicy {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SamplingError::BadPolicy(s.to_string());
        if s == "per-point" {
            return Ok(DMinPolicy::PerPoint);
        }
        let value: f64 = s
            .strip_prefix("const:")
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        if !value.is_finite() || value < 0.0 {
            return Err(bad());
        }
        Ok(DMinPolicy::Constant(value))
    }
}

impl fmt::Display for DMinPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DMinPolicy::PerPoint => f.write_str("per-point"),
            DMinPolicy::Constant(v) => write!(f, "const:{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StartPolicy {
    /// Uniform choice among edge points, seeded.
    EdgeRandom,
    /// Smallest `(row, col)` among edge points.
    EdgeDeterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub d_min: DMinPolicy,
    pub start: StartPolicy,
    pub seed: u64,
    /// Steps longer than this end the current walk and restart it from the
    /// remaining edge-most point. `None` never restarts.
    pub max_step: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            d_min: DMinPolicy::PerPoint,
            start: StartPolicy::EdgeRandom,
            seed: 0,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    FromLidar,
    FromDepth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledPoint {
    pub position: Vec3,
    pub pixel: [f64; 2],
    pub provenance: Provenance,
}

/// The sampled cloud `P = D_s ∪ P_s` with the intermediate pixel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCloud {
    pub width: u32,
    pub height: u32,
    /// LiDAR points first (guide order), then kept pseudo points in `(row, col)` order.
    pub points: Vec<SampledPoint>,
    pub guide_pixels: BTreeSet<Pixel>,
    pub augmented: BTreeSet<Pixel>,
    pub pseudo_kept: BTreeSet<Pixel>,
}

impl SampledCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &Vec3> {
        self.points.iter().map(|p| &p.position)
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.points
            .iter()
            .filter(|p| p.provenance == provenance)
            .count()
    }
}

/// Projects returns through `extrinsic` (sensor frame to camera optical frame)
/// and keeps those in front of the camera whose pixel lies inside the image.
pub fn project_scan_to_guides(
    scan: &LidarScan,
    camera: &PinholeCamera,
    extrinsic: &RigidTransform,
) -> Result<GuidePointSet, SamplingError> {
    let entries: Vec<GuideEntry> = scan
        .returns
        .iter()
        .filter_map(|r| {
            let (u, v, _) = camera.project_point(&extrinsic.apply_point(&r.point)).ok()?;
            let (col, row) = camera.pixel_of(u, v)?;
            Some(GuideEntry {
                uv: [u, v],
                pixel: Pixel::new(col, row),
                source: r.point,
            })
        })
        .collect();
    if entries.is_empty() {
        return Err(SamplingError::EmptyGuide);
    }
    Ok(GuidePointSet {
        width: camera.width,
        height: camera.height,
        entries,
    })
}

fn guide_grid(uvs: &[[f64; 2]]) -> PointGrid<'_> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in uvs {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(1.0);
    let cell = (2.0 * (area / uvs.len() as f64).sqrt()).max(1.0);
    PointGrid::new(uvs, cell)
}

/// Index of the nearest guide at a nonzero distance from entry `i`, ties to the smallest index.
fn scan_neighbour(grid: &PointGrid<'_>, len: usize, i: usize) -> Result<usize, SamplingError> {
    grid.nearest_other(i, true)
        .map(|(j, _)| j)
        .ok_or(SamplingError::DegenerateGuide(len))
}

/// Unit direction from entry `i` to its nearest guide neighbour.
pub fn scan_direction(guides: &GuidePointSet, i: usize) -> Result<[f64; 2], SamplingError> {
    if guides.len() < 2 {
        return Err(SamplingError::DegenerateGuide(guides.len()));
    }
    let uvs = guides.uvs();
    let grid = guide_grid(&uvs);
    let j = scan_neighbour(&grid, uvs.len(), i)?;
    let (dx, dy) = (uvs[j][0] - uvs[i][0], uvs[j][1] - uvs[i][1]);
    let n = dx.hypot(dy);
    Ok([dx / n, dy / n])
}

/// Depth pixels on the supercover lines joining each guide to its scan neighbour.
pub fn build_d_aug(
    guides: &GuidePointSet,
    depth_points: &PseudoPointSet,
) -> Result<BTreeSet<Pixel>, SamplingError> {
    if guides.len() < 2 {
        return Err(SamplingError::DegenerateGuide(guides.len()));
    }
    let uvs = guides.uvs();
    let grid = guide_grid(&uvs);
    let segments: Vec<Vec<Pixel>> = (0..uvs.len())
        .into_par_iter()
        .map(|i| {
            let j = scan_neighbour(&grid, uvs.len(), i)?;
            Ok(
                raster::supercover_in_image(uvs[i], uvs[j], guides.width, guides.height)
                    .into_iter()
                    .filter(|p| depth_points.contains(p.col, p.row))
                    .collect(),
            )
        })
        .collect::<Result<_, SamplingError>>()?;
    Ok(segments.into_iter().flatten().collect())
}

/// Euclidean distance from `pixel` to the closest member of `ds`.
pub fn compute_d_min(pixel: &Pixel, ds: &BTreeSet<Pixel>) -> Result<f64, SamplingError> {
    ds.iter()
        .map(|q| pixel.dist2(q))
        .min()
        .map(|d2| (d2 as f64).sqrt())
        .ok_or(SamplingError::EmptySampledSet)
}

/// Nearest-pixel distances to a fixed pixel set, answered from a bucket grid.
pub struct NearestPixel {
    index: PixelIndex,
}

impl NearestPixel {
    pub fn new(pixels: &BTreeSet<Pixel>) -> Result<Self, SamplingError> {
        let (w, h) = bounds(pixels.iter()).ok_or(SamplingError::EmptySampledSet)?;
        Ok(Self {
            index: PixelIndex::new(w, h, pixels),
        })
    }

    pub fn distance(&self, pixel: &Pixel) -> f64 {
        // queries outside the indexed bounds are clamped into it by the ring search
        let (_, d2) = self.index.nearest(pixel).expect("index is nonempty");
        (d2 as f64).sqrt()
    }
}

fn bounds<'a>(pixels: impl Iterator<Item = &'a Pixel>) -> Option<(u32, u32)> {
    pixels.fold(None, |acc, p| {
        let (w, h) = acc.unwrap_or((0, 0));
        Some((w.max(p.col + 1), h.max(p.row + 1)))
    })
}

/// One step of the pruning walk.
#[derive(Debug, Clone, PartialEq)]
pub enum WalkEvent {
    Start { at: Pixel, lidar: bool },
    Restart { at: Pixel, lidar: bool },
    /// Step onto a LiDAR pixel.
    Advance { from: Pixel, to: Pixel },
    /// A pseudo point passed the spacing test and the walk moved onto it.
    Keep { from: Pixel, to: Pixel, d: f64, d_min: f64 },
    /// A pseudo point failed the spacing test and was dropped.
    Prune { from: Pixel, at: Pixel, d: f64, d_min: f64 },
}

impl fmt::Display for WalkEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = |lidar: bool| if lidar { "lidar" } else { "pseudo" };
        match self {
            WalkEvent::Start { at, lidar } => write!(f, "start {at} {}", kind(*lidar)),
            WalkEvent::Restart { at, lidar } => write!(f, "restart {at} {}", kind(*lidar)),
            WalkEvent::Advance { from, to } => write!(f, "advance {to} from {from}"),
            WalkEvent::Keep { from, to, d, d_min } => {
                write!(f, "keep {to} from {from} d={d:.6} dmin={d_min:.6}")
            }
            WalkEvent::Prune { from, at, d, d_min } => {
                write!(f, "prune {at} from {from} d={d:.6} dmin={d_min:.6}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkOutcome {
    /// `P_s`: pseudo points that survived.
    pub kept: BTreeSet<Pixel>,
    pub trace: Vec<WalkEvent>,
}

impl WalkOutcome {
    pub fn trace_text(&self) -> String {
        self.trace.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Remaining points at minimal border distance, in `(row, col)` order.
fn edge_candidates(index: &PixelIndex, width: u32, height: u32) -> Vec<Pixel> {
    let min = index
        .iter()
        .map(|p| p.border_distance(width, height))
        .min()
        .unwrap_or(0)
        .max(1);
    index
        .iter()
        .filter(|p| p.border_distance(width, height) <= min)
        .copied()
        .collect()
}

/// Thins `D_aug \ D_s` by a greedy nearest-neighbour walk over `D_s ∪ D_aug`
/// in a `width x height` image and returns the surviving pseudo pixels `P_s`.
pub fn prune_traversal(
    ds: &BTreeSet<Pixel>,
    d_aug: &BTreeSet<Pixel>,
    width: u32,
    height: u32,
    config: &SamplerConfig,
) -> Result<BTreeSet<Pixel>, SamplingError> {
    walk(ds, d_aug, width, height, config, false).map(|o| o.kept)
}

/// [`prune_traversal`] with the full step-by-step trace.
pub fn prune_traversal_traced(
    ds: &BTreeSet<Pixel>,
    d_aug: &BTreeSet<Pixel>,
    width: u32,
    height: u32,
    config: &SamplerConfig,
) -> Result<WalkOutcome, SamplingError> {
    walk(ds, d_aug, width, height, config, true)
}

fn walk(
    ds: &BTreeSet<Pixel>,
    d_aug: &BTreeSet<Pixel>,
    width: u32,
    height: u32,
    config: &SamplerConfig,
    traced: bool,
) -> Result<WalkOutcome, SamplingError> {
    if ds.is_empty() {
        return Err(SamplingError::EmptySampledSet);
    }
    let mut outcome = WalkOutcome {
        kept: BTreeSet::new(),
        trace: Vec::new(),
    };
    let record = |outcome: &mut WalkOutcome, e: WalkEvent| {
        if traced {
            outcome.trace.push(e);
        }
    };
    let pseudo: Vec<Pixel> = d_aug.difference(ds).copied().collect();
    let d_min_of: Box<dyn Fn(&Pixel) -> f64> = match config.d_min {
        DMinPolicy::Constant(c) => Box::new(move |_| c),
        DMinPolicy::PerPoint => {
            let nearest = NearestPixel::new(ds)?;
            let table: std::collections::HashMap<Pixel, f64> = pseudo
                .par_iter()
                .map(|p| (*p, nearest.distance(p)))
                .collect();
            Box::new(move |p| table[p])
        }
    };

    let mut remaining = PixelIndex::new(width, height, ds.iter().chain(pseudo.iter()));
    let candidates = edge_candidates(&remaining, width, height);
    let start = match config.start {
        StartPolicy::EdgeDeterministic => candidates[0],
        StartPolicy::EdgeRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            candidates[rng.gen_range(0..candidates.len())]
        }
    };
    let mut current = start;
    remaining.remove(&current);
    let start_lidar = ds.contains(&current);
    if !start_lidar {
        outcome.kept.insert(current);
    }
    record(&mut outcome, WalkEvent::Start { at: current, lidar: start_lidar });

    while let Some((next, d2)) = remaining.nearest(&current) {
        let d = (d2 as f64).sqrt();
        if config.max_step.is_some_and(|m| d > m) {
            current = edge_candidates(&remaining, width, height)[0];
            remaining.remove(&current);
            let lidar = ds.contains(&current);
            if !lidar {
                outcome.kept.insert(current);
            }
            record(&mut outcome, WalkEvent::Restart { at: current, lidar });
            continue;
        }
        remaining.remove(&next);
        if ds.contains(&next) {
            record(&mut outcome, WalkEvent::Advance { from: current, to: next });
            current = next;
            continue;
        }
        let d_min = d_min_of(&next);
        if d < d_min {
            record(
                &mut outcome,
                WalkEvent::Prune { from: current, at: next, d, d_min },
            );
        } else {
            record(
                &mut outcome,
                WalkEvent::Keep { from: current, to: next, d, d_min },
            );
            outcome.kept.insert(next);
            current = next;
        }
    }
    Ok(outcome)
}

/// Full pipeline: guides from the scan, `D` from the depth map, `D_aug`, the
/// pruning walk, and the merged cloud in the LiDAR sensor frame.
pub fn lidar_guided_sample(
    scan: &LidarScan,
    depth: &DepthMap,
    camera: &PinholeCamera,
    extrinsic: &RigidTransform,
    config: &SamplerConfig,
) -> Result<SampledCloud, SamplingError> {
    let guides = project_scan_to_guides(scan, camera, extrinsic)?;
    let depth_points = backproject_depth(depth, camera, &extrinsic.inverse());
    sample_with_guides(&guides, &depth_points, config)
}

/// [`lidar_guided_sample`] from precomputed `L` and `D`.
pub fn sample_with_guides(
    guides: &GuidePointSet,
    depth_points: &PseudoPointSet,
    config: &SamplerConfig,
) -> Result<SampledCloud, SamplingError> {
    let augmented = build_d_aug(guides, depth_points)?;
    let guide_pixels = guides.pixels();
    let pseudo_kept = prune_traversal(
        &guide_pixels,
        &augmented,
        guides.width,
        guides.height,
        config,
    )?;
    let mut points: Vec<SampledPoint> = guides
        .entries
        .iter()
        .map(|e| SampledPoint {
            position: e.source,
            pixel: e.uv,
            provenance: Provenance::FromLidar,
        })
        .collect();
    points.extend(pseudo_kept.iter().map(|p| SampledPoint {
        position: *depth_points
            .get(p.col, p.row)
            .expect("augmented pixels are depth pixels"),
        pixel: p.as_point(),
        provenance: Provenance::FromDepth,
    }));
    Ok(SampledCloud {
        width: guides.width,
        height: guides.height,
        points,
        guide_pixels,
        augmented,
        pseudo_kept,
    })
}

/// Nearest-neighbour pixel spacing over a cloud.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityStats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

pub fn density_stats(cloud: &SampledCloud) -> Result<DensityStats, SamplingError> {
    let uvs: Vec<[f64; 2]> = cloud.points.iter().map(|p| p.pixel).collect();
    spacing_stats(&uvs)
}

/// Nearest-neighbour spacing statistics of arbitrary image points.
/// Percentiles use the nearest-rank rule.
pub fn spacing_stats(uvs: &[[f64; 2]]) -> Result<DensityStats, SamplingError> {
    let n = uvs.len();
    if n < 2 {
        return Err(SamplingError::TooFewPoints(n));
    }
    let grid = guide_grid(uvs);
    let mut spacing: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| grid.nearest_other(i, false).expect("n >= 2").1)
        .collect();
    spacing.sort_by(f64::total_cmp);
    let rank = |pct: f64| spacing[((pct / 100.0 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Ok(DensityStats {
        count: n,
        min: spacing[0],
        mean: spacing.iter().sum::<f64>() / n as f64,
        p10: rank(10.0),
        p50: rank(50.0),
        p90: rank(90.0),
        max: spacing[n - 1],
    })
}
