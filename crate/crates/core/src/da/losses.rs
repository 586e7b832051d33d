//! Adaptation losses on probability maps. Domain labels: source 0, target 1.

use serde::{Deserialize, Serialize};

use super::nn::Dense;
use super::{DaError, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// How a map is reduced to one number for the level means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelReduction {
    /// Divide by the number of locations, so maps of different sizes compare.
    #[default]
    LocationMean,
    /// Plain sum over locations.
    StrictSum,
}

fn check_maps(maps: &[Tensor], what: &str) -> Result<(), DaError> {
    if maps.is_empty() {
        return Err(DaError::EmptyBatch(what.to_string()));
    }
    for m in maps {
        if let Some(&p) = m.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(DaError::InvalidProbability(p));
        }
    }
    Ok(())
}

fn finite(v: f64, what: &str) -> Result<f64, DaError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DaError::NonFiniteLoss(what.to_string()))
    }
}

/// `-(1/n) sum_i mean_loc log(q)`, where `q` is `1 - p` for source maps and `p` for target maps.
fn domain_term(maps: &[Tensor], target: bool) -> f64 {
    let per_sample: f64 = maps
        .iter()
        .map(|m| {
            m.data()
                .iter()
                .map(|&p| {
                    let p = clamp_prob(p);
                    if target {
                        p.ln()
                    } else {
                        (1.0 - p).ln()
                    }
                })
                .sum::<f64>()
                / m.len() as f64
        })
        .sum();
    -per_sample / maps.len() as f64
}

/// Sample-level adversarial loss: source term plus target term.
pub fn sample_level_loss(source: &[Tensor], target: &[Tensor]) -> Result<f64, DaError> {
    check_maps(source, "source sample maps")?;
    check_maps(target, "target sample maps")?;
    finite(domain_term(source, false) + domain_term(target, true), "sample loss")
}

/// Anchor-level adversarial loss; same form as the sample-level loss.
pub fn anchor_level_loss(source: &[Tensor], target: &[Tensor]) -> Result<f64, DaError> {
    check_maps(source, "source anchor maps")?;
    check_maps(target, "target anchor maps")?;
    finite(domain_term(source, false) + domain_term(target, true), "anchor loss")
}

/// Batch mean of the per-map reduction.
pub fn level_mean(maps: &[Tensor], reduction: LevelReduction) -> f64 {
    maps.iter()
        .map(|m| {
            let s: f64 = m.data().iter().sum();
            match reduction {
                LevelReduction::LocationMean => s / m.len() as f64,
                LevelReduction::StrictSum => s,
            }
        })
        .sum::<f64>()
        / maps.len() as f64
}

/// Maps of one domain at both levels.
#[derive(Debug, Clone, Copy)]
pub struct LevelMaps<'a> {
    pub sample: &'a [Tensor],
    pub anchor: &'a [Tensor],
}

/// `|M_s - M_a|` on the source batch plus the same on the target batch.
pub fn consistency_loss(
    source: LevelMaps<'_>,
    target: LevelMaps<'_>,
    reduction: LevelReduction,
) -> Result<f64, DaError> {
    let mut total = 0.0;
    for (maps, name) in [(source, "source"), (target, "target")] {
        check_maps(maps.sample, &format!("{name} sample maps"))?;
        check_maps(maps.anchor, &format!("{name} anchor maps"))?;
        total += (level_mean(maps.sample, reduction) - level_mean(maps.anchor, reduction)).abs();
    }
    finite(total, "consistency loss")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub detection: f64,
    pub sample: f64,
    pub anchor: f64,
    pub consistency: f64,
    pub lambda: f64,
    pub total: f64,
}

/// `det + lambda * (sample + anchor + consistency)`.
pub fn total_loss(
    detection: f64,
    sample: f64,
    anchor: f64,
    consistency: f64,
    lambda: f64,
) -> Result<LossBreakdown, DaError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(DaError::BadConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(LossBreakdown {
        detection,
        sample,
        anchor,
        consistency,
        lambda,
        total: detection + lambda * (sample + anchor + consistency),
    })
}

/// Mean softmax cross-entropy of a linear head on `[n, features]` rows.
pub fn toy_detection_loss(features: &[Vec<f64>], labels: &[usize], head: &Dense) -> Result<f64, DaError> {
    if features.is_empty() {
        return Err(DaError::EmptyBatch("source features".into()));
    }
    if features.len() != labels.len() {
        return Err(DaError::ShapeMismatch(format!(
            "{} feature rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(f) = features.iter().find(|f| f.len() != head.inputs()) {
        return Err(DaError::ShapeMismatch(format!(
            "head takes {} features, row has {}",
            head.inputs(),
            f.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= head.outputs()) {
        return Err(DaError::ShapeMismatch(format!("label {l} out of range")));
    }
    let logits = head.eval_rows(features);
    let loss = logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| super::graph::log_sum_exp(z) - z[y])
        .sum::<f64>()
        / labels.len() as f64;
    finite(loss, "detection loss")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::da::nn::Activation;
    use proptest::prelude::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn maps(n: usize, h: usize, w: usize, v: f64) -> Vec<Tensor> {
        (0..n).map(|_| Tensor::filled(vec![h, w], v)).collect()
    }

    fn random_maps(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize) -> Vec<Tensor> {
        (0..n)
            .map(|_| {
                let d = (0..h * w).map(|_| rng.gen_range(0.001..0.999)).collect();
                Tensor::new(vec![h, w], d).unwrap()
            })
            .collect()
    }

    #[test]
    fn half_probabilities_give_two_ln_two() {
        let l = sample_level_loss(&maps(3, 2, 4, 0.5), &maps(5, 2, 4, 0.5)).unwrap();
        assert!((l - 2.0 * LN_2).abs() < 1e-9);
        let l = anchor_level_loss(&maps(1, 1, 3, 0.5), &maps(2, 1, 3, 0.5)).unwrap();
        assert!((l - 2.0 * LN_2).abs() < 1e-9);
    }

    #[test]
    fn perfect_separation_is_near_zero() {
        let l = sample_level_loss(&maps(2, 2, 2, 0.0), &maps(2, 2, 2, 1.0)).unwrap();
        assert!(l >= 0.0 && l < 1e-6, "{l}");
    }

    #[test]
    fn errors() {
        assert!(matches!(sample_level_loss(&[], &maps(1, 1, 1, 0.5)), Err(DaError::EmptyBatch(_))));
        assert!(matches!(
            anchor_level_loss(&maps(1, 1, 1, 1.5), &maps(1, 1, 1, 0.5)),
            Err(DaError::InvalidProbability(_))
        ));
        assert!(matches!(
            sample_level_loss(&maps(1, 1, 1, f64::NAN), &maps(1, 1, 1, 0.5)),
            Err(DaError::InvalidProbability(_))
        ));
        assert!(total_loss(1.0, 1.0, 1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn consistency_constants() {
        let s = maps(1, 2, 2, 0.8);
        let a = maps(1, 1, 3, 0.3);
        let l = consistency_loss(
            LevelMaps { sample: &s, anchor: &a },
            LevelMaps { sample: &s, anchor: &a },
            LevelReduction::LocationMean,
        )
        .unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let same = consistency_loss(
            LevelMaps { sample: &s, anchor: &s },
            LevelMaps { sample: &a, anchor: &a },
            LevelReduction::LocationMean,
        )
        .unwrap();
        assert_eq!(same, 0.0);
        // strict sums: 4 * 0.8 vs 3 * 0.3
        let strict = consistency_loss(
            LevelMaps { sample: &s, anchor: &a },
            LevelMaps { sample: &s, anchor: &a },
            LevelReduction::StrictSum,
        )
        .unwrap();
        assert!((strict - 2.0 * (3.2 - 0.9)).abs() < 1e-12);
    }

    #[test]
    fn total_identities() {
        assert_eq!(total_loss(0.7, 1.0, 2.0, 3.0, 0.0).unwrap().total, 0.7);
        assert_eq!(total_loss(0.5, 1.0, 1.0, 1.0, 1.0).unwrap().total, 3.5);
    }

    #[test]
    fn detection_loss_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut head = Dense::glorot(2, 2, Activation::Identity, &mut rng);
        head.weight = Tensor::zeros(vec![2, 2]);
        let feats = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let l = toy_detection_loss(&feats, &[0, 1], &head).unwrap();
        assert!((l - LN_2).abs() < 1e-12);
        head.weight = Tensor::new(vec![2, 2], vec![50.0, -50.0, -50.0, 50.0]).unwrap();
        let l = toy_detection_loss(&feats, &[0, 1], &head).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn naive_loop_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (ns, nt) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let (hs, ws, ha, wa) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4));
            let ss = random_maps(&mut rng, ns, hs, ws);
            let st = random_maps(&mut rng, nt, hs, ws);
            let as_ = random_maps(&mut rng, ns, ha, wa);
            let at = random_maps(&mut rng, nt, ha, wa);

            // scalar-by-scalar loops over (sample, h, w)
            let naive_adv = |src: &[Tensor], tgt: &[Tensor], h: usize, w: usize| {
                let mut ls = 0.0;
                for m in src {
                    let mut acc = 0.0;
                    for r in 0..h {
                        for c in 0..w {
                            acc += (1.0 - m.data()[r * w + c]).ln();
                        }
                    }
                    ls += acc / (h * w) as f64;
                }
                let mut lt = 0.0;
                for m in tgt {
                    let mut acc = 0.0;
                    for r in 0..h {
                        for c in 0..w {
                            acc += m.data()[r * w + c].ln();
                        }
                    }
                    lt += acc / (h * w) as f64;
                }
                -ls / src.len() as f64 - lt / tgt.len() as f64
            };
            let got = sample_level_loss(&ss, &st).unwrap();
            assert!((got - naive_adv(&ss, &st, hs, ws)).abs() < 1e-12);
            let got = anchor_level_loss(&as_, &at).unwrap();
            assert!((got - naive_adv(&as_, &at, ha, wa)).abs() < 1e-12);

            let naive_mean = |maps: &[Tensor]| {
                let mut total = 0.0;
                for m in maps {
                    let mut acc = 0.0;
                    for v in m.data() {
                        acc += v;
                    }
                    total += acc / m.len() as f64;
                }
                total / maps.len() as f64
            };
            let want = (naive_mean(&ss) - naive_mean(&as_)).abs() + (naive_mean(&st) - naive_mean(&at)).abs();
            let got = consistency_loss(
                LevelMaps { sample: &ss, anchor: &as_ },
                LevelMaps { sample: &st, anchor: &at },
                LevelReduction::LocationMean,
            )
            .unwrap();
            assert!((got - want).abs() < 1e-12);

            let c: [f64; 5] = [rng.gen(), rng.gen(), rng.gen(), rng.gen(), rng.gen()];
            let b = total_loss(c[0], c[1], c[2], c[3], c[4]).unwrap();
            let sum = c[1] + c[2] + c[3];
            assert!((b.total - (c[0] + c[4] * sum)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn loss_invariants(seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ns, nt) = (rng.gen_range(1..4), rng.gen_range(1..4));
            let s = random_maps(&mut rng, ns, 2, 3);
            let t = random_maps(&mut rng, nt, 2, 3);
            let a_s = random_maps(&mut rng, ns, 1, 2);
            let a_t = random_maps(&mut rng, nt, 1, 2);
            let l = sample_level_loss(&s, &t).unwrap();
            prop_assert!(l >= 0.0);
            // swapping domain labels together with p -> 1 - p changes nothing
            let flip = |m: &[Tensor]| m.iter().map(|x| x.map(|p| 1.0 - p)).collect::<Vec<_>>();
            let swapped = sample_level_loss(&flip(&t), &flip(&s)).unwrap();
            prop_assert!((l - swapped).abs() < 1e-9);
            let fwd = consistency_loss(
                LevelMaps { sample: &s, anchor: &a_s },
                LevelMaps { sample: &t, anchor: &a_t },
                LevelReduction::LocationMean,
            ).unwrap();
            let rev = consistency_loss(
                LevelMaps { sample: &a_s, anchor: &s },
                LevelMaps { sample: &a_t, anchor: &t },
                LevelReduction::LocationMean,
            ).unwrap();
            prop_assert!(fwd >= 0.0);
            prop_assert!((fwd - rev).abs() < 1e-15);
        }
    }
}
