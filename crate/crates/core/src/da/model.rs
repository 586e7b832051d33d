//! Two-level toy detector: per-location sample features, row-pooled anchor
//! features, a domain classifier behind a reversal layer at each level, and
//! a linear task head on the pooled anchor features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::losses::{total_loss, LevelReduction, LossBreakdown, PROB_CLAMP};
use super::nn::{Activation, Dense, DomainClassifier, FeatureExtractor, GrlConfig};
use super::{DaError, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub input_dim: usize,
    /// Sample-level map size `[H, W]`; the anchor map is `[1, W]`.
    pub grid: [usize; 2],
    /// Hidden widths of the sample-level extractor.
    pub sample_dims: Vec<usize>,
    /// Hidden widths of the anchor-level extractor (applied on sample features).
    pub anchor_dims: Vec<usize>,
    pub classes: usize,
    pub activation: Activation,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 6,
            grid: [2, 2],
            sample_dims: vec![12],
            anchor_dims: vec![8],
            classes: 2,
            activation: Activation::Relu,
        }
    }
}

impl ToyModelConfig {
    pub fn locations(&self) -> usize {
        self.grid[0] * self.grid[1]
    }

    pub fn anchor_locations(&self) -> usize {
        self.grid[1]
    }
}

/// One map-shaped input `[H, W, input_dim]` with its task label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySample {
    pub x: Tensor,
    pub label: usize,
}

/// Labelled source items and unlabelled target items.
#[derive(Debug, Clone, Copy)]
pub struct DomainBatch<'a> {
    pub source: &'a [ToySample],
    pub target: &'a [ToySample],
}

impl DomainBatch<'_> {
    pub fn counts(&self) -> (usize, usize) {
        (self.source.len(), self.target.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub grl: GrlConfig,
    pub reduction: LevelReduction,
    #[doc(hidden)]
    #[serde(skip)]
    pub inject_grl_sign_bug: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            grl: GrlConfig::default(),
            reduction: LevelReduction::LocationMean,
            inject_grl_sign_bug: false,
        }
    }
}

impl LossConfig {
    fn grl_multiplier(&self) -> f64 {
        if self.inject_grl_sign_bug {
            self.grl.r
        } else {
            self.grl.multiplier()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub config: ToyModelConfig,
    pub sample_extractor: FeatureExtractor,
    pub anchor_extractor: FeatureExtractor,
    pub sample_classifier: DomainClassifier,
    pub anchor_classifier: DomainClassifier,
    pub head: Dense,
}

struct Bound {
    fs: Vec<[Var; 2]>,
    fa: Vec<[Var; 2]>,
    ds: [Var; 2],
    da: [Var; 2],
    head: [Var; 2],
}

impl Bound {
    fn all(&self) -> Vec<Var> {
        let mut v: Vec<Var> = Vec::new();
        for p in self.fs.iter().chain(&self.fa) {
            v.extend(p);
        }
        v.extend(self.ds);
        v.extend(self.da);
        v.extend(self.head);
        v
    }
}

struct DomainVars {
    sample_p: Var,
    anchor_p: Var,
    logits: Var,
}

/// Scalar nodes of the training objective.
pub(crate) struct LossVars {
    pub detection: Var,
    pub sample: Var,
    pub anchor: Var,
    pub consistency: Var,
    pub total: Var,
}

impl ToyModel {
    pub fn new(config: ToyModelConfig, rng: &mut impl Rng) -> Result<Self, DaError> {
        if config.input_dim == 0 || config.grid.contains(&0) || config.classes < 2 {
            return Err(DaError::BadConfig(format!("bad model config {config:?}")));
        }
        let mut dims = vec![config.input_dim];
        dims.extend(&config.sample_dims);
        if dims.len() < 2 {
            return Err(DaError::BadConfig("sample extractor needs a hidden layer".into()));
        }
        let sample_extractor = FeatureExtractor::random(&dims, config.activation, rng)?;
        let mut adims = vec![sample_extractor.output_dim()];
        adims.extend(&config.anchor_dims);
        if adims.len() < 2 {
            return Err(DaError::BadConfig("anchor extractor needs a hidden layer".into()));
        }
        let anchor_extractor = FeatureExtractor::random(&adims, config.activation, rng)?;
        let sample_classifier = DomainClassifier::random(sample_extractor.output_dim(), rng);
        let anchor_classifier = DomainClassifier::random(anchor_extractor.output_dim(), rng);
        let head = Dense::glorot(anchor_extractor.output_dim(), config.classes, Activation::Identity, rng);
        Ok(Self {
            config,
            sample_extractor,
            anchor_extractor,
            sample_classifier,
            anchor_classifier,
            head,
        })
    }

    /// Parameters in a fixed order shared with the gradient vectors.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = self.sample_extractor.params();
        v.extend(self.anchor_extractor.params());
        v.extend(self.sample_classifier.params());
        v.extend(self.anchor_classifier.params());
        v.push(&self.head.weight);
        v.push(&self.head.bias);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.sample_extractor.params_mut();
        v.extend(self.anchor_extractor.params_mut());
        v.extend(self.sample_classifier.params_mut());
        v.extend(self.anchor_classifier.params_mut());
        v.push(&mut self.head.weight);
        v.push(&mut self.head.bias);
        v
    }

    /// Number of leading parameter tensors that sit upstream of a reversal layer.
    pub fn extractor_param_count(&self) -> usize {
        2 * (self.sample_extractor.layers.len() + self.anchor_extractor.layers.len())
    }

    fn bind(&self, g: &mut Graph) -> Result<Bound, DaError> {
        Ok(Bound {
            fs: self.sample_extractor.bind(g)?,
            fa: self.anchor_extractor.bind(g)?,
            ds: self.sample_classifier.bind(g)?,
            da: self.anchor_classifier.bind(g)?,
            head: self.head.bind(g)?,
        })
    }

    fn check_sample(&self, s: &ToySample) -> Result<(), DaError> {
        let [h, w] = self.config.grid;
        if s.x.shape() != [h, w, self.config.input_dim] {
            return Err(DaError::ShapeMismatch(format!(
                "sample shape {:?}, model expects {:?}",
                s.x.shape(),
                [h, w, self.config.input_dim]
            )));
        }
        if s.label >= self.config.classes {
            return Err(DaError::ShapeMismatch(format!("label {} out of range", s.label)));
        }
        Ok(())
    }

    fn forward_domain(
        &self,
        g: &mut Graph,
        samples: &[ToySample],
        b: &Bound,
        grl: f64,
    ) -> Result<DomainVars, DaError> {
        for s in samples {
            self.check_sample(s)?;
        }
        let n = samples.len();
        let [h, w] = self.config.grid;
        let (ls, la) = (h * w, w);
        let d = self.config.input_dim;
        let x = g.constant(n * ls, d, samples.iter().flat_map(|s| s.x.data().iter().copied()).collect())?;
        let fs = self.sample_extractor.apply(g, x, &b.fs)?;
        let rs = g.grl_with_multiplier(fs, grl);
        let sample_p = self.sample_classifier.apply(g, rs, &b.ds)?;

        let fa = self.anchor_extractor.apply(g, fs, &b.fa)?;
        // mean over grid rows: anchor location (i, c) pools (i, r, c) for every r
        let mut pool = vec![0.0; n * la * n * ls];
        for i in 0..n {
            for c in 0..w {
                for r in 0..h {
                    pool[(i * la + c) * n * ls + i * ls + r * w + c] = 1.0 / h as f64;
                }
            }
        }
        let pool = g.constant(n * la, n * ls, pool)?;
        let fa = g.matmul(pool, fa)?;
        let ra = g.grl_with_multiplier(fa, grl);
        let anchor_p = self.anchor_classifier.apply(g, ra, &b.da)?;

        let mut task_pool = vec![0.0; n * n * la];
        for i in 0..n {
            for c in 0..la {
                task_pool[i * n * la + i * la + c] = 1.0 / la as f64;
            }
        }
        let task_pool = g.constant(n, n * la, task_pool)?;
        let pooled = g.matmul(task_pool, fa)?;
        let logits = self.head.apply(g, pooled, &b.head)?;
        Ok(DomainVars {
            sample_p,
            anchor_p,
            logits,
        })
    }

    fn adversarial(g: &mut Graph, src: Var, tgt: Var) -> Result<Var, DaError> {
        let cs = g.clamp(src, PROB_CLAMP, 1.0 - PROB_CLAMP);
        let os = g.one_minus(cs);
        let ls = g.log(os);
        let ms = g.mean(ls);
        let ct = g.clamp(tgt, PROB_CLAMP, 1.0 - PROB_CLAMP);
        let lt = g.log(ct);
        let mt = g.mean(lt);
        let s = g.add(ms, mt)?;
        Ok(g.scale(s, -1.0))
    }

    fn level_mean(g: &mut Graph, p: Var, locations: usize, reduction: LevelReduction) -> Var {
        let m = g.mean(p);
        match reduction {
            LevelReduction::LocationMean => m,
            LevelReduction::StrictSum => g.scale(m, locations as f64),
        }
    }

    pub(crate) fn build_losses(
        &self,
        g: &mut Graph,
        batch: DomainBatch<'_>,
        cfg: &LossConfig,
    ) -> Result<(LossVars, Vec<Var>), DaError> {
        if batch.source.is_empty() {
            return Err(DaError::EmptyBatch("source batch".into()));
        }
        if batch.target.is_empty() {
            return Err(DaError::EmptyBatch("target batch".into()));
        }
        if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
            return Err(DaError::BadConfig(format!("lambda must be >= 0, got {}", cfg.lambda)));
        }
        let b = self.bind(g)?;
        let m = cfg.grl_multiplier();
        let src = self.forward_domain(g, batch.source, &b, m)?;
        let tgt = self.forward_domain(g, batch.target, &b, m)?;
        let labels: Vec<usize> = batch.source.iter().map(|s| s.label).collect();
        let detection = g.softmax_ce(src.logits, &labels)?;
        let sample = Self::adversarial(g, src.sample_p, tgt.sample_p)?;
        let anchor = Self::adversarial(g, src.anchor_p, tgt.anchor_p)?;
        let (ls, la) = (self.config.locations(), self.config.anchor_locations());
        let mut con = None;
        for d in [&src, &tgt] {
            let ms = Self::level_mean(g, d.sample_p, ls, cfg.reduction);
            let ma = Self::level_mean(g, d.anchor_p, la, cfg.reduction);
            let diff = g.sub(ms, ma)?;
            let term = g.abs(diff);
            con = Some(match con {
                None => term,
                Some(c) => g.add(c, term)?,
            });
        }
        let consistency = con.expect("two domains");
        let adapt = g.add(sample, anchor)?;
        let adapt = g.add(adapt, consistency)?;
        let weighted = g.scale(adapt, cfg.lambda);
        let total = g.add(detection, weighted)?;
        Ok((
            LossVars {
                detection,
                sample,
                anchor,
                consistency,
                total,
            },
            b.all(),
        ))
    }

    fn breakdown(g: &Graph, v: &LossVars, lambda: f64) -> Result<LossBreakdown, DaError> {
        let b = total_loss(
            g.scalar(v.detection),
            g.scalar(v.sample),
            g.scalar(v.anchor),
            g.scalar(v.consistency),
            lambda,
        )?;
        if !b.total.is_finite() {
            return Err(DaError::NonFiniteLoss("total loss".into()));
        }
        Ok(b)
    }

    /// Forward pass only.
    pub fn losses(&self, batch: DomainBatch<'_>, cfg: &LossConfig) -> Result<LossBreakdown, DaError> {
        let mut g = Graph::new();
        let (v, _) = self.build_losses(&mut g, batch, cfg)?;
        Self::breakdown(&g, &v, cfg.lambda)
    }

    /// Loss breakdown and the gradient of the total for every parameter, in
    /// [`ToyModel::params`] order.
    pub fn loss_and_grads(
        &self,
        batch: DomainBatch<'_>,
        cfg: &LossConfig,
    ) -> Result<(LossBreakdown, Vec<Vec<f64>>), DaError> {
        let mut g = Graph::new();
        let (v, params) = self.build_losses(&mut g, batch, cfg)?;
        let b = Self::breakdown(&g, &v, cfg.lambda)?;
        let grads = g.backward(v.total);
        Ok((b, params.iter().map(|&p| grads.get(p).to_vec()).collect()))
    }

    fn rows(&self, s: &ToySample) -> Vec<Vec<f64>> {
        s.x.data().chunks(self.config.input_dim).map(|c| c.to_vec()).collect()
    }

    /// Sample-level `[H, W]` and anchor-level `[1, W]` probability maps.
    pub fn domain_maps(&self, s: &ToySample) -> Result<(Tensor, Tensor), DaError> {
        self.check_sample(s)?;
        let [h, w] = self.config.grid;
        let fs = self.sample_extractor.eval_rows(&self.rows(s));
        let ps: Vec<f64> = self.sample_classifier.layer.eval_rows(&fs).into_iter().map(|r| r[0]).collect();
        let pooled = self.pooled_anchor(&fs);
        let pa: Vec<f64> = self
            .anchor_classifier
            .layer
            .eval_rows(&pooled)
            .into_iter()
            .map(|r| r[0])
            .collect();
        Ok((Tensor::new(vec![h, w], ps)?, Tensor::new(vec![1, w], pa)?))
    }

    fn pooled_anchor(&self, fs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let [h, w] = self.config.grid;
        let fa = self.anchor_extractor.eval_rows(fs);
        let dim = self.anchor_extractor.output_dim();
        (0..w)
            .map(|c| {
                let mut acc = vec![0.0; dim];
                for r in 0..h {
                    for (a, v) in acc.iter_mut().zip(&fa[r * w + c]) {
                        *a += v / h as f64;
                    }
                }
                acc
            })
            .collect()
    }

    /// Pooled anchor features: the task head's input.
    pub fn features(&self, s: &ToySample) -> Result<Vec<f64>, DaError> {
        self.check_sample(s)?;
        let fs = self.sample_extractor.eval_rows(&self.rows(s));
        let pooled = self.pooled_anchor(&fs);
        let dim = self.anchor_extractor.output_dim();
        let mut out = vec![0.0; dim];
        for row in &pooled {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v / pooled.len() as f64;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, s: &ToySample) -> Result<usize, DaError> {
        let f = self.features(s)?;
        let z = &self.head.eval_rows(&[f])[0];
        Ok((0..z.len()).fold(0, |best, j| if z[j] > z[best] { j } else { best }))
    }
}

/// Which side of the domain split an input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn label(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    /// `[H, W]` target-domain probabilities.
    pub probabilities: Tensor,
    /// Domain cross-entropy of the map against `domain`'s label.
    pub loss: f64,
    /// Gradients for the extractor, already reversed by the GRL.
    pub extractor_grads: Vec<Tensor>,
    /// Un-reversed gradients for the classifier.
    pub classifier_grads: Vec<Tensor>,
}

/// Extractor, reversal layer and per-location classifier on one `[H, W, C]` input.
pub fn forward_backward(
    extractor: &FeatureExtractor,
    classifier: &DomainClassifier,
    grl: &GrlConfig,
    input: &Tensor,
    domain: Domain,
) -> Result<ForwardBackward, DaError> {
    let (h, w, c) = match input.shape() {
        [h, w, c] => (*h, *w, *c),
        s => return Err(DaError::ShapeMismatch(format!("input must be [H, W, C], got {s:?}"))),
    };
    if c != extractor.input_dim() {
        return Err(DaError::ShapeMismatch(format!(
            "input has {c} channels, extractor takes {}",
            extractor.input_dim()
        )));
    }
    if classifier.layer.inputs() != extractor.output_dim() {
        return Err(DaError::ShapeMismatch(format!(
            "classifier takes {} features, extractor emits {}",
            classifier.layer.inputs(),
            extractor.output_dim()
        )));
    }
    let mut g = Graph::new();
    let x = g.constant(h * w, c, input.data().to_vec())?;
    let fp = extractor.bind(&mut g)?;
    let cp = classifier.bind(&mut g)?;
    let f = extractor.apply(&mut g, x, &fp)?;
    let r = g.grl(f, grl.r);
    let p = classifier.apply(&mut g, r, &cp)?;
    let probabilities = Tensor::new(vec![h, w], g.value(p).to_vec())?;
    let cl = g.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let q = match domain {
        Domain::Source => g.one_minus(cl),
        Domain::Target => cl,
    };
    let lq = g.log(q);
    let m = g.mean(lq);
    let loss = g.scale(m, -1.0);
    let grads = g.backward(loss);
    let collect = |params: Vec<&Tensor>, vars: Vec<Var>| {
        params
            .into_iter()
            .zip(vars)
            .map(|(t, v)| {
                let mut out = Tensor::zeros(t.shape().to_vec());
                out.data_mut().copy_from_slice(grads.get(v));
                out
            })
            .collect::<Vec<_>>()
    };
    Ok(ForwardBackward {
        probabilities,
        loss: g.scalar(loss),
        extractor_grads: collect(extractor.params(), fp.iter().flatten().copied().collect()),
        classifier_grads: collect(classifier.params(), cp.to_vec()),
    })
}
