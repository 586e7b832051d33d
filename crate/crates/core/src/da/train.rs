//! Adversarial training on two synthetic Gaussian domains.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::model::{DomainBatch, LossConfig, ToyModel, ToyModelConfig, ToySample};
use super::nn::{Activation, Adam, Dense};
use super::{DaError, Tensor};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Two domains share the class structure (class means differ along the
/// first input axis) and differ by a mean shift along the second axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDataConfig {
    pub train_per_domain: usize,
    pub test_per_domain: usize,
    pub class_separation: f64,
    pub domain_shift: f64,
    pub noise: f64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        Self {
            train_per_domain: 400,
            test_per_domain: 400,
            class_separation: 2.0,
            domain_shift: 4.0,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub source_train: Vec<ToySample>,
    pub target_train: Vec<ToySample>,
    pub source_test: Vec<ToySample>,
    pub target_test: Vec<ToySample>,
}

fn draw(rng: &mut ChaCha8Rng, data: &ToyDataConfig, model: &ToyModelConfig, target: bool) -> ToySample {
    let label = rng.gen_range(0..2usize);
    let d = model.input_dim;
    let mut x = Vec::with_capacity(model.locations() * d);
    for _ in 0..model.locations() {
        for k in 0..d {
            let mut v = data.noise * rng.sample::<f64, _>(StandardNormal);
            if k == 0 {
                v += (label as f64 - 0.5) * data.class_separation;
            }
            if k == 1 && target {
                v += data.domain_shift;
            }
            x.push(v);
        }
    }
    ToySample {
        x: Tensor::new(vec![model.grid[0], model.grid[1], d], x).expect("shape"),
        label,
    }
}

pub fn generate_toy_domains(
    data: &ToyDataConfig,
    model: &ToyModelConfig,
    seed: u64,
) -> Result<ToyDataset, DaError> {
    if model.input_dim < 2 || model.classes != 2 {
        return Err(DaError::BadConfig(
            "toy domains need two classes and at least two input channels".into(),
        ));
    }
    if data.train_per_domain == 0 || data.test_per_domain == 0 {
        return Err(DaError::BadConfig("toy domains need samples in every split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = |n: usize, target: bool| (0..n).map(|_| draw(&mut rng, data, model, target)).collect();
    Ok(ToyDataset {
        source_train: set(data.train_per_domain, false),
        target_train: set(data.train_per_domain, true),
        source_test: set(data.test_per_domain, false),
        target_test: set(data.test_per_domain, true),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub data: ToyDataConfig,
    pub model: ToyModelConfig,
    pub loss: LossConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub probe_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: ToyDataConfig::default(),
            model: ToyModelConfig::default(),
            loss: LossConfig::default(),
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.01,
            probe_steps: 300,
            seed: 7,
        }
    }
}

/// Mean losses over the minibatches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub detection: f64,
    pub sample: f64,
    pub anchor: f64,
    pub consistency: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub epochs: Vec<EpochLog>,
    /// Task accuracy on held-out source samples.
    pub source_task_accuracy: f64,
    /// Task accuracy on held-out target samples (labels unused in training).
    pub target_task_accuracy: f64,
    /// Held-out accuracy of a fresh logistic probe on frozen pooled features.
    pub domain_accuracy: f64,
    /// Set when training stopped on a non-finite loss.
    pub diverged_at_epoch: Option<usize>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, DaError> {
        let r: TrainReport = serde_json::from_str(text).map_err(|e| DaError::BadConfig(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(DaError::BadConfig(format!(
                "report schema {} (expected {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

pub fn task_accuracy(model: &ToyModel, samples: &[ToySample]) -> Result<f64, DaError> {
    let mut hits = 0;
    for s in samples {
        hits += (model.predict(s)? == s.label) as usize;
    }
    Ok(hits as f64 / samples.len().max(1) as f64)
}

/// Fits a logistic regression to tell domains apart from frozen pooled
/// features on the training split and returns its held-out accuracy.
pub fn domain_probe(model: &ToyModel, data: &ToyDataset, steps: usize, seed: u64) -> Result<f64, DaError> {
    let feats = |s: &[ToySample]| -> Result<Vec<Vec<f64>>, DaError> { s.iter().map(|x| model.features(x)).collect() };
    let (fs, ft) = (feats(&data.source_train)?, feats(&data.target_train)?);
    let dim = model.anchor_extractor.output_dim();
    let rows: Vec<f64> = fs.iter().chain(&ft).flatten().copied().collect();
    let n = fs.len() + ft.len();
    let labels: Vec<usize> = (0..n).map(|i| (i >= fs.len()) as usize).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = Dense::glorot(dim, 2, Activation::Identity, &mut rng);
    let mut opt = Adam::new(0.05);
    for _ in 0..steps {
        let mut g = Graph::new();
        let x = g.constant(n, dim, rows.clone())?;
        let p = probe.bind(&mut g)?;
        let z = probe.apply(&mut g, x, &p)?;
        let loss = g.softmax_ce(z, &labels)?;
        let grads = g.backward(loss);
        let gw = grads.get(p[0]).to_vec();
        let gb = grads.get(p[1]).to_vec();
        opt.step(&mut [&mut probe.weight, &mut probe.bias], &[gw, gb]);
    }
    let test_s = feats(&data.source_test)?;
    let test_t = feats(&data.target_test)?;
    let logits_s = probe.eval_rows(&test_s);
    let logits_t = probe.eval_rows(&test_t);
    let hits = logits_s.iter().filter(|z| z[0] >= z[1]).count() + logits_t.iter().filter(|z| z[1] > z[0]).count();
    Ok(hits as f64 / (test_s.len() + test_t.len()) as f64)
}

/// Trains extractor, classifiers and head jointly; the reversal layers turn
/// the classifiers' objective into an adversarial signal for the extractors.
/// A non-finite loss stops training with [`DaError::DivergedTraining`]
/// carrying the report up to the previous epoch.
pub fn toy_adversarial_train(cfg: &TrainConfig) -> Result<TrainReport, DaError> {
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(DaError::BadConfig("batch size and learning rate must be positive".into()));
    }
    let data = generate_toy_domains(&cfg.data, &cfg.model, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut model = ToyModel::new(cfg.model.clone(), &mut rng)?;
    let mut opt = Adam::new(cfg.learning_rate);
    let mut epochs = Vec::new();
    let mut diverged = None;
    let (mut src_idx, mut tgt_idx): (Vec<usize>, Vec<usize>) =
        ((0..data.source_train.len()).collect(), (0..data.target_train.len()).collect());
    'outer: for epoch in 0..cfg.epochs {
        src_idx.shuffle(&mut rng);
        tgt_idx.shuffle(&mut rng);
        let batches = src_idx.len().min(tgt_idx.len()).div_ceil(cfg.batch_size);
        let mut acc = EpochLog {
            epoch,
            detection: 0.0,
            sample: 0.0,
            anchor: 0.0,
            consistency: 0.0,
            total: 0.0,
        };
        for b in 0..batches {
            let lo = b * cfg.batch_size;
            let pick = |idx: &[usize], set: &[ToySample]| -> Vec<ToySample> {
                idx[lo..(lo + cfg.batch_size).min(idx.len())]
                    .iter()
                    .map(|&i| set[i].clone())
                    .collect()
            };
            let (source, target) = (pick(&src_idx, &data.source_train), pick(&tgt_idx, &data.target_train));
            let batch = DomainBatch {
                source: &source,
                target: &target,
            };
            let (losses, grads) = match model.loss_and_grads(batch, &cfg.loss) {
                Ok(v) => v,
                Err(DaError::NonFiniteLoss(_)) => {
                    diverged = Some(epoch);
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                diverged = Some(epoch);
                break 'outer;
            }
            opt.step(&mut model.params_mut(), &grads);
            acc.detection += losses.detection;
            acc.sample += losses.sample;
            acc.anchor += losses.anchor;
            acc.consistency += losses.consistency;
            acc.total += losses.total;
        }
        let k = batches.max(1) as f64;
        acc.detection /= k;
        acc.sample /= k;
        acc.anchor /= k;
        acc.consistency /= k;
        acc.total /= k;
        epochs.push(acc);
    }
    let finished = diverged.is_none();
    let report = TrainReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        epochs,
        source_task_accuracy: if finished { task_accuracy(&model, &data.source_test)? } else { f64::NAN },
        target_task_accuracy: if finished { task_accuracy(&model, &data.target_test)? } else { f64::NAN },
        domain_accuracy: if finished {
            domain_probe(&model, &data, cfg.probe_steps, cfg.seed.wrapping_add(2))?
        } else {
            f64::NAN
        },
        diverged_at_epoch: diverged,
    };
    match diverged {
        Some(epoch) => Err(DaError::DivergedTraining {
            epoch,
            report: Box::new(report),
        }),
        None => Ok(report),
    }
}
