use super::*;
use crate::geometry::Vec3;
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn car(x: f64, y: f64) -> OrientedBox {
    OrientedBox::new(Vec3::new(x, y, 0.75), 4.0, 2.0, 1.5, 0.0).unwrap()
}

fn easy(bbox: OrientedBox) -> GroundTruth {
    GroundTruth {
        bbox,
        difficulty: Difficulty::Easy,
        num_points: 500,
    }
}

fn det(bbox: OrientedBox, score: f64) -> Detection {
    Detection { bbox, score }
}

#[test]
fn difficulty_boundaries() {
    let t = DifficultyThresholds::default();
    assert_eq!(assign_difficulty(0, &t).unwrap(), Difficulty::Hard);
    assert_eq!(assign_difficulty(19, &t).unwrap(), Difficulty::Hard);
    assert_eq!(assign_difficulty(20, &t).unwrap(), Difficulty::Moderate);
    assert_eq!(assign_difficulty(99, &t).unwrap(), Difficulty::Moderate);
    assert_eq!(assign_difficulty(100, &t).unwrap(), Difficulty::Easy);
    let bad = DifficultyThresholds { easy: 20, moderate: 20 };
    assert!(matches!(assign_difficulty(5, &bad), Err(EvalError::BadThresholds { .. })));
}

#[test]
fn perfect_and_empty() {
    let gts: Vec<GroundTruth> = (0..4).map(|i| easy(car(10.0 * i as f64, 0.0))).collect();
    let dets: Vec<Detection> = gts.iter().map(|g| det(g.bbox, 0.9)).collect();
    let pr = match_and_pr(&dets, &gts, IouMode::ThreeD, 0.7, Difficulty::Easy);
    let last = pr.points.last().unwrap();
    assert_eq!((last.recall, last.precision), (1.0, 1.0));
    assert_eq!(average_precision(&pr, ApPoints::Eleven), 100.0);
    assert_eq!(average_precision(&pr, ApPoints::Forty), 100.0);

    let none = match_and_pr(&[], &gts, IouMode::Bev, 0.7, Difficulty::Hard);
    assert!(none.points.is_empty());
    assert_eq!(average_precision(&none, ApPoints::Eleven), 0.0);
}

/// Five cars 10 m apart, seven detections. Shifts along the 4 m length give
/// IoU (4 - s) / (4 + s): 0.2 m -> 0.905, 0.3 m -> 0.860, 0.8 m -> 0.667.
fn hand_case() -> (Vec<Detection>, Vec<GroundTruth>) {
    let gts: Vec<GroundTruth> = (0..5).map(|i| easy(car(10.0 * i as f64, 0.0))).collect();
    let dets = vec![
        det(car(0.0, 0.0), 0.95),  // gt0, TP
        det(car(10.2, 0.0), 0.90), // gt1, TP
        det(car(0.2, 0.0), 0.85),  // gt0 again, already taken: FP
        det(car(25.0, 0.0), 0.80), // nothing there: FP
        det(car(20.8, 0.0), 0.70), // gt2 below threshold: FP
        det(car(30.0, 0.0), 0.60), // gt3, TP
        det(car(39.7, 0.0), 0.50), // gt4, TP
    ];
    (dets, gts)
}

#[test]
fn hand_enumerated_case() {
    let (dets, gts) = hand_case();
    let want: [(f64, f64); 7] = [
        (1.0 / 5.0, 1.0),
        (2.0 / 5.0, 1.0),
        (2.0 / 5.0, 2.0 / 3.0),
        (2.0 / 5.0, 2.0 / 4.0),
        (2.0 / 5.0, 2.0 / 5.0),
        (3.0 / 5.0, 3.0 / 6.0),
        (4.0 / 5.0, 4.0 / 7.0),
    ];
    for mode in IouMode::ALL {
        let pr = match_and_pr(&dets, &gts, mode, 0.7, Difficulty::Easy);
        let got: Vec<(f64, f64)> = pr.points.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(got, want);
        // recall 0..0.4 reaches precision 1, 0.5..0.8 reaches 4/7, 0.9 and 1.0 nothing
        let hand = (5.0 * 1.0 + 4.0 * (4.0 / 7.0) + 2.0 * 0.0) / 11.0 * 100.0;
        let ap = average_precision(&pr, ApPoints::Eleven);
        assert!((ap - hand).abs() < 1e-12, "{ap} vs {hand}");
        assert!((ap - 100.0 * 51.0 / 77.0).abs() < 1e-12);
    }
}

#[test]
fn greedy_takes_highest_iou() {
    let gts = vec![easy(car(0.0, 0.0)), easy(car(0.5, 0.0))];
    // closer to gt1 (IoU 0.905) than gt0 (IoU 0.739)
    let d = det(car(0.7, 0.0), 1.0);
    let (outcome, n) = match_frame(&[d], &gts, IouMode::Bev, 0.7, Difficulty::Easy);
    assert_eq!((outcome[0], n), (MatchOutcome::TruePositive, 2));
    let mut gts2 = gts.clone();
    gts2[1].difficulty = Difficulty::Hard;
    let (outcome, n) = match_frame(&[d], &gts2, IouMode::Bev, 0.7, Difficulty::Easy);
    assert_eq!((outcome[0], n), (MatchOutcome::Ignored, 1));
    let (outcome, n) = match_frame(&[d], &gts2, IouMode::Bev, 0.7, Difficulty::Hard);
    assert_eq!((outcome[0], n), (MatchOutcome::TruePositive, 2));
}

#[test]
fn harder_bins_admit_easier_ground_truth() {
    let t = DifficultyThresholds::default();
    let gts = vec![
        GroundTruth::new(car(0.0, 0.0), 300, &t).unwrap(),
        GroundTruth::new(car(10.0, 0.0), 50, &t).unwrap(),
        GroundTruth::new(car(20.0, 0.0), 3, &t).unwrap(),
    ];
    let dets: Vec<Detection> = gts.iter().map(|g| det(g.bbox, 0.5)).collect();
    let counts: Vec<usize> = Difficulty::ALL
        .iter()
        .map(|&d| match_and_pr(&dets, &gts, IouMode::Bev, 0.7, d).num_gt)
        .collect();
    assert_eq!(counts, vec![1, 2, 3]);
    for d in Difficulty::ALL {
        let pr = match_and_pr(&dets, &gts, IouMode::Bev, 0.7, d);
        assert_eq!(average_precision(&pr, ApPoints::Eleven), 100.0);
    }
}

#[test]
fn constant_precision_is_exact() {
    for (tp_every, p) in [(1usize, 1.0), (2, 0.5), (4, 0.25), (5, 0.2)] {
        // ranking where precision stays exactly 1/tp_every after each TP
        let n = 10;
        let mut ranked = Vec::new();
        for _ in 0..n {
            for _ in 1..tp_every {
                ranked.push((1.0, MatchOutcome::FalsePositive));
            }
            ranked.push((1.0, MatchOutcome::TruePositive));
        }
        let pr = PrCurve::from_ranked(&ranked, n);
        assert_eq!(average_precision(&pr, ApPoints::Eleven), p * 100.0);
        assert_eq!(average_precision(&pr, ApPoints::Forty), p * 100.0);
    }
    let curve = |p: f64| PrCurve {
        num_gt: 3,
        points: (1..=3)
            .map(|i| PrPoint {
                score: 1.0,
                recall: i as f64 / 3.0,
                precision: p,
            })
            .collect(),
    };
    for p in [0.3, 0.7, 0.1, 0.9, 1.0 / 3.0] {
        assert_eq!(average_precision(&curve(p), ApPoints::Eleven), p * 100.0);
    }
}

#[test]
fn staircase_matches_hand_sum() {
    let pts = [(0.15, 0.9), (0.35, 0.8), (0.55, 0.85), (0.72, 0.4), (0.95, 0.3)];
    let pr = PrCurve {
        num_gt: 20,
        points: pts
            .iter()
            .map(|&(recall, precision)| PrPoint {
                score: 0.0,
                recall,
                precision,
            })
            .collect(),
    };
    // r = 0, .1: 0.9; .2, .3, .4, .5: 0.85; .6, .7: 0.4; .8, .9: 0.3; 1.0: 0
    let hand = (0.9 * 2.0 + 0.85 * 4.0 + 0.4 * 2.0 + 0.3 * 2.0) / 11.0 * 100.0;
    assert!((average_precision(&pr, ApPoints::Eleven) - hand).abs() < 1e-12);
}

fn random_box(rng: &mut ChaCha8Rng) -> OrientedBox {
    OrientedBox::new(
        Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)),
        rng.gen_range(1.0..4.5),
        rng.gen_range(0.8..2.2),
        rng.gen_range(0.8..2.0),
        rng.gen_range(-3.2..3.2),
    )
    .unwrap()
}

/// Containment oracle: fraction of uniform samples inside both boxes over
/// those inside either, in the ground plane or in space.
pub(crate) fn monte_carlo_iou(a: &OrientedBox, b: &OrientedBox, volumetric: bool, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = |x: &OrientedBox| 0.5 * x.length.hypot(x.width);
    let lo = [
        (a.center.x - reach(a)).min(b.center.x - reach(b)),
        (a.center.y - reach(a)).min(b.center.y - reach(b)),
        a.z_range().0.min(b.z_range().0),
    ];
    let hi = [
        (a.center.x + reach(a)).max(b.center.x + reach(b)),
        (a.center.y + reach(a)).max(b.center.y + reach(b)),
        a.z_range().1.max(b.z_range().1),
    ];
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..n {
        let mut p = Vec3::new(rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1]), 0.0);
        let (ia, ib) = if volumetric {
            p.z = rng.gen_range(lo[2]..hi[2]);
            (a.contains(&p, 0.0), b.contains(&p, 0.0))
        } else {
            p.z = a.center.z;
            let pb = Vec3::new(p.x, p.y, b.center.z);
            (a.contains(&p, 0.0), b.contains(&pb, 0.0))
        };
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    both as f64 / either.max(1) as f64
}

#[test]
fn rotated_square_monte_carlo() {
    let a = OrientedBox::new(Vec3::zeros(), 1.0, 1.0, 1.0, 0.0).unwrap();
    let b = OrientedBox::new(Vec3::zeros(), 1.0, 1.0, 1.0, std::f64::consts::FRAC_PI_4).unwrap();
    let mc = monte_carlo_iou(&a, &b, false, 1_000_000, 1);
    assert!((bev_iou(&a, &b) - mc).abs() < 1e-2);
}

#[test]
fn random_pairs_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..20 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let bev = monte_carlo_iou(&a, &b, false, 100_000, k);
        let vol = monte_carlo_iou(&a, &b, true, 100_000, k + 1000);
        assert!((bev_iou(&a, &b) - bev).abs() < 1e-2, "pair {k}");
        assert!((iou_3d(&a, &b) - vol).abs() < 1e-2, "pair {k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_symmetric_and_scale_invariant(seed in 0u64..u64::MAX, s in 0.05f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        for mode in IouMode::ALL {
            let ab = mode.iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - mode.iou(&b, &a)).abs() < 1e-9);
            prop_assert!((ab - mode.iou(&a.scaled(s), &b.scaled(s))).abs() < 1e-9);
        }
        prop_assert!(iou_3d(&a, &b) <= bev_iou(&a, &b) + 1e-12);
        let mut b2 = b;
        b2.center.z = a.center.z;
        b2.height = a.height;
        prop_assert!((iou_3d(&a, &b2) - bev_iou(&a, &b2)).abs() < 1e-9);
    }

    #[test]
    fn top_scoring_true_positive_never_lowers_ap(seed in 0u64..u64::MAX) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_gt = rng.gen_range(2..8usize);
        let gts: Vec<GroundTruth> = (0..n_gt).map(|i| easy(car(10.0 * i as f64, 0.0))).collect();
        // leave the last ground truth undetected, then add it on top
        let mut dets: Vec<Detection> = Vec::new();
        for _ in 0..rng.gen_range(0..10) {
            let i = rng.gen_range(0..n_gt - 1);
            let shift = rng.gen_range(-1.0..1.0);
            dets.push(det(car(10.0 * i as f64 + shift, 0.0), rng.gen_range(0.0..1.0)));
        }
        let before = average_precision(&match_and_pr(&dets, &gts, IouMode::Bev, 0.7, Difficulty::Hard), ApPoints::Eleven);
        dets.push(det(gts[n_gt - 1].bbox, 2.0));
        let after = average_precision(&match_and_pr(&dets, &gts, IouMode::Bev, 0.7, Difficulty::Hard), ApPoints::Eleven);
        prop_assert!(after >= before - 1e-9, "{before} -> {after}");
    }
}
