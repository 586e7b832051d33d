//! Central finite differences against the tape's gradients.
//!
//! The oracle differentiates the detection and adaptation parts of the
//! objective separately. Extractor parameters sit upstream of a reversal
//! layer, so their expected gradient is `d(det) - lambda * r * d(adapt)`;
//! every other parameter expects `d(det) + lambda * d(adapt)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::losses::LevelReduction;
use super::model::{DomainBatch, LossConfig, ToyModel, ToyModelConfig, ToySample};
use super::nn::{Activation, GrlConfig};
use super::{DaError, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub configurations: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Gradients smaller than this are compared absolutely.
    pub floor: f64,
    #[doc(hidden)]
    #[serde(skip)]
    pub inject_sign_bug: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            configurations: 100,
            seed: 0,
            step: 1e-5,
            tolerance: 1e-6,
            floor: 1e-3,
            inject_sign_bug: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub configurations: usize,
    pub entries: usize,
    pub max_relative_error: f64,
    pub worst: String,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, expected: f64, floor: f64) -> f64 {
    (analytic - expected).abs() / analytic.abs().max(expected.abs()).max(floor)
}

/// Worst relative error over every parameter entry of `model`.
pub fn check_model(
    model: &ToyModel,
    batch: DomainBatch<'_>,
    cfg: &LossConfig,
    step: f64,
    floor: f64,
) -> Result<(usize, f64, String), DaError> {
    let (_, grads) = model.loss_and_grads(batch, cfg)?;
    let upstream = model.extractor_param_count();
    let clean = LossConfig {
        inject_grl_sign_bug: false,
        ..*cfg
    };
    let mut probe = model.clone();
    let mut worst = (0.0f64, String::new());
    let mut entries = 0;
    let shapes: Vec<usize> = model.params().iter().map(|t| t.len()).collect();
    for (k, &len) in shapes.iter().enumerate() {
        let sign = if k < upstream { -cfg.grl.r } else { 1.0 };
        for j in 0..len {
            let x0 = probe.params()[k].data()[j];
            let mut eval = |x: f64| -> Result<(f64, f64), DaError> {
                probe.params_mut()[k].data_mut()[j] = x;
                let b = probe.losses(batch, &clean)?;
                Ok((b.detection, b.sample + b.anchor + b.consistency))
            };
            let (dp, ap) = eval(x0 + step)?;
            let (dm, am) = eval(x0 - step)?;
            probe.params_mut()[k].data_mut()[j] = x0;
            let expected = (dp - dm) / (2.0 * step) + cfg.lambda * sign * (ap - am) / (2.0 * step);
            let err = relative_error(grads[k][j], expected, floor);
            entries += 1;
            if err > worst.0 || worst.1.is_empty() {
                worst = (
                    err,
                    format!("param {k} entry {j}: analytic {:.9e} expected {expected:.9e}", grads[k][j]),
                );
            }
        }
    }
    Ok((entries, worst.0, worst.1))
}

fn random_sample(rng: &mut ChaCha8Rng, cfg: &ToyModelConfig) -> ToySample {
    let n = cfg.locations() * cfg.input_dim;
    let x = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    ToySample {
        x: Tensor::new(vec![cfg.grid[0], cfg.grid[1], cfg.input_dim], x).expect("shape"),
        label: rng.gen_range(0..cfg.classes),
    }
}

/// Random architectures, parameters, inputs, `lambda` and `r`.
pub fn gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport, DaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradcheckReport {
        configurations: opts.configurations,
        entries: 0,
        max_relative_error: 0.0,
        worst: String::new(),
        passed: true,
    };
    for c in 0..opts.configurations {
        let acts = [Activation::Tanh, Activation::Sigmoid];
        let mcfg = ToyModelConfig {
            input_dim: rng.gen_range(1..5),
            grid: [rng.gen_range(1..4), rng.gen_range(1..4)],
            sample_dims: (0..rng.gen_range(1..3)).map(|_| rng.gen_range(1..6)).collect(),
            anchor_dims: (0..rng.gen_range(1..3)).map(|_| rng.gen_range(1..6)).collect(),
            classes: rng.gen_range(2..4),
            activation: acts[rng.gen_range(0..2)],
        };
        let mut model = ToyModel::new(mcfg.clone(), &mut rng)?;
        for p in model.params_mut() {
            for v in p.data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let source: Vec<ToySample> = (0..rng.gen_range(1..4)).map(|_| random_sample(&mut rng, &mcfg)).collect();
        let target: Vec<ToySample> = (0..rng.gen_range(1..4)).map(|_| random_sample(&mut rng, &mcfg)).collect();
        let cfg = LossConfig {
            lambda: rng.gen_range(0.05..2.0),
            grl: GrlConfig::new(rng.gen_range(0.1..2.0))?,
            reduction: if rng.gen_bool(0.5) {
                LevelReduction::LocationMean
            } else {
                LevelReduction::StrictSum
            },
            inject_grl_sign_bug: opts.inject_sign_bug,
        };
        let batch = DomainBatch {
            source: &source,
            target: &target,
        };
        let (entries, err, worst) = check_model(&model, batch, &cfg, opts.step, opts.floor)?;
        report.entries += entries;
        if err > report.max_relative_error || report.worst.is_empty() {
            report.max_relative_error = err;
            report.worst = format!("configuration {c}, {worst}");
        }
    }
    report.passed = report.max_relative_error < opts.tolerance;
    Ok(report)
}

/// Worst finite-difference error of one graph operation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpCheck {
    pub op: String,
    pub max_relative_error: f64,
}

/// Per-operation checks: each op is applied to a random leaf and reduced to a
/// scalar through a random linear read-out. Inputs avoid the kinks of `relu`,
/// `abs` and `clamp` and keep `log` positive.
pub fn check_ops(opts: &GradcheckOptions) -> Result<Vec<OpCheck>, DaError> {
    type Build = Box<dyn Fn(&mut Graph, Var) -> Result<Var, DaError>>;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (rows, cols) = (3, 4);
    let mut away = |lo: f64, hi: f64, gap: &[f64]| -> Vec<f64> {
        (0..rows * cols)
            .map(|_| loop {
                let v = rng.gen_range(lo..hi);
                if gap.iter().all(|g| (v - g).abs() > 0.05) {
                    break v;
                }
            })
            .collect()
    };
    let general = away(-1.5, 1.5, &[0.0]);
    let positive = away(0.1, 2.0, &[]);
    let clamped = away(-1.0, 1.0, &[-0.5, 0.5]);
    let readout: Vec<f64> = (0..cols).map(|i| 0.3 + 0.4 * i as f64).collect();
    let other: Vec<f64> = (0..rows * cols).map(|i| (i as f64 * 0.37).sin()).collect();
    let bias: Vec<f64> = (0..cols).map(|i| 0.1 * i as f64 - 0.2).collect();
    let r = 0.7;
    let grl_multiplier = if opts.inject_sign_bug { r } else { -r };

    // reduces a [rows, cols] node to a scalar with uneven weights
    let read = move |g: &mut Graph, v: Var| -> Result<Var, DaError> {
        let w = g.constant(cols, 1, readout.clone())?;
        let y = g.matmul(v, w)?;
        Ok(g.sum(y))
    };
    let elementwise = |f: fn(&mut Graph, Var) -> Var| -> Build {
        let read = read.clone();
        Box::new(move |g, v| {
            let y = f(g, v);
            read(g, y)
        })
    };
    let o1 = other.clone();
    let o2 = other.clone();
    let o3 = other;
    let ops: Vec<(&str, Vec<f64>, f64, Build)> = vec![
        ("matmul", general.clone(), 1.0, {
            let read = read.clone();
            Box::new(move |g, v| {
                let m = g.constant(cols, cols, (0..cols * cols).map(|i| (i as f64 * 0.71).cos()).collect())?;
                let y = g.matmul(v, m)?;
                read(g, y)
            })
        }),
        ("add_row", general.clone(), 1.0, {
            let read = read.clone();
            Box::new(move |g, v| {
                let b = g.constant(1, cols, bias.clone())?;
                let y = g.add_row(v, b)?;
                let y = g.tanh(y);
                read(g, y)
            })
        }),
        ("add", general.clone(), 1.0, {
            let read = read.clone();
            Box::new(move |g, v| {
                let o = g.constant(rows, cols, o1.clone())?;
                let y = g.add(v, o)?;
                let y = g.tanh(y);
                read(g, y)
            })
        }),
        ("sub", general.clone(), 1.0, {
            let read = read.clone();
            Box::new(move |g, v| {
                let o = g.constant(rows, cols, o2.clone())?;
                let y = g.sub(o, v)?;
                let y = g.tanh(y);
                read(g, y)
            })
        }),
        ("scale", general.clone(), 1.0, elementwise(|g, v| g.scale(v, -1.3))),
        ("tanh", general.clone(), 1.0, elementwise(|g, v| g.tanh(v))),
        ("relu", general.clone(), 1.0, elementwise(|g, v| g.relu(v))),
        ("sigmoid", general.clone(), 1.0, elementwise(|g, v| g.sigmoid(v))),
        ("clamp", clamped, 1.0, elementwise(|g, v| g.clamp(v, -0.5, 0.5))),
        ("log", positive.clone(), 1.0, elementwise(|g, v| g.log(v))),
        ("one_minus", positive, 1.0, elementwise(|g, v| g.one_minus(v))),
        ("abs", general.clone(), 1.0, elementwise(|g, v| g.abs(v))),
        ("mean", general.clone(), 1.0, Box::new(|g, v| {
            let y = g.tanh(v);
            Ok(g.mean(y))
        })),
        ("sum", general.clone(), 1.0, Box::new(|g, v| {
            let y = g.sigmoid(v);
            Ok(g.sum(y))
        })),
        ("softmax_ce", general.clone(), 1.0, Box::new(|g, v| g.softmax_ce(v, &[2, 0, 3]))),
        // the oracle expects the reversed, scaled gradient
        ("grl", general, -r, {
            let read = read.clone();
            Box::new(move |g, v| {
                let y = g.grl_with_multiplier(v, grl_multiplier);
                let o = g.constant(rows, cols, o3.clone())?;
                let y = g.add(y, o)?;
                let y = g.tanh(y);
                read(g, y)
            })
        }),
    ];

    let mut out = Vec::with_capacity(ops.len());
    for (name, x0, expect, build) in ops {
        let eval = |x: &[f64]| -> Result<f64, DaError> {
            let mut g = Graph::new();
            let v = g.leaf_from(rows, cols, x.to_vec())?;
            let y = build(&mut g, v)?;
            Ok(g.scalar(y))
        };
        let mut g = Graph::new();
        let v = g.leaf_from(rows, cols, x0.clone())?;
        let y = build(&mut g, v)?;
        let analytic = g.backward(y).get(v).to_vec();
        let mut worst = 0f64;
        for j in 0..x0.len() {
            let (mut xp, mut xm) = (x0.clone(), x0.clone());
            xp[j] += opts.step;
            xm[j] -= opts.step;
            let fd = expect * (eval(&xp)? - eval(&xm)?) / (2.0 * opts.step);
            worst = worst.max(relative_error(analytic[j], fd, opts.floor));
        }
        out.push(OpCheck {
            op: name.to_string(),
            max_relative_error: worst,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_on_random_configurations() {
        let r = gradcheck(&GradcheckOptions {
            configurations: 10,
            ..Default::default()
        })
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.entries > 100);
    }

    #[test]
    fn catches_injected_sign_bug() {
        let r = gradcheck(&GradcheckOptions {
            configurations: 3,
            inject_sign_bug: true,
            ..Default::default()
        })
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_relative_error > 0.1, "{r:?}");
    }

    #[test]
    fn every_op_passes_and_grl_sign_is_checked() {
        let opts = GradcheckOptions::default();
        let checks = check_ops(&opts).unwrap();
        assert_eq!(checks.len(), 16);
        for c in &checks {
            assert!(c.max_relative_error < opts.tolerance, "{c:?}");
        }
        let bad = check_ops(&GradcheckOptions {
            inject_sign_bug: true,
            ..opts
        })
        .unwrap();
        for c in &bad {
            assert_eq!(c.max_relative_error > 0.1, c.op == "grl", "{c:?}");
        }
    }
}
