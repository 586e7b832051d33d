//! Dense layers, the per-location extractor and domain classifier, and Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::{DaError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

/// `act(x W + b)` applied to every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[inputs, outputs]`
    pub weight: Tensor,
    /// `[outputs]`
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs).map(|_| rng.gen_range(-a..a)).collect();
        Self {
            weight: Tensor::new(vec![inputs, outputs], w).expect("positive dims"),
            bias: Tensor::zeros(vec![outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind(&self, g: &mut Graph) -> Result<[Var; 2], DaError> {
        Ok([g.leaf(&self.weight)?, g.leaf(&self.bias)?])
    }

    pub fn apply(&self, g: &mut Graph, x: Var, p: &[Var; 2]) -> Result<Var, DaError> {
        let y = g.matmul(x, p[0])?;
        let y = g.add_row(y, p[1])?;
        Ok(self.activation.apply(g, y))
    }

    /// Forward pass on plain rows, no tape.
    pub fn eval_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (w, b) = (self.weight.data(), self.bias.data());
        let (n_in, n_out) = (self.inputs(), self.outputs());
        rows.iter()
            .map(|x| {
                (0..n_out)
                    .map(|j| {
                        let z = b[j] + (0..n_in).map(|i| x[i] * w[i * n_out + j]).sum::<f64>();
                        match self.activation {
                            Activation::Identity => z,
                            Activation::Tanh => z.tanh(),
                            Activation::Relu => z.max(0.0),
                            Activation::Sigmoid => super::graph::sigmoid(z),
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Stack of dense layers applied independently at every map location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub layers: Vec<Dense>,
}

impl FeatureExtractor {
    pub fn new(layers: Vec<Dense>) -> Result<Self, DaError> {
        if layers.is_empty() {
            return Err(DaError::ShapeMismatch("extractor needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(DaError::ShapeMismatch(format!(
                    "layer {i} emits {} features but layer {} takes {}",
                    w[0].outputs(),
                    i + 1,
                    w[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-initialised layers `dims[0] -> dims[1] -> ...`, all with `activation`.
    pub fn random(dims: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self, DaError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(DaError::ShapeMismatch(format!("bad extractor dims {dims:?}")));
        }
        Self::new(
            dims.windows(2)
                .map(|w| Dense::glorot(w[0], w[1], activation, rng))
                .collect(),
        )
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn bind(&self, g: &mut Graph) -> Result<Vec<[Var; 2]>, DaError> {
        self.layers.iter().map(|l| l.bind(g)).collect()
    }

    pub fn apply(&self, g: &mut Graph, x: Var, p: &[[Var; 2]]) -> Result<Var, DaError> {
        let mut h = x;
        for (layer, vars) in self.layers.iter().zip(p) {
            h = layer.apply(g, h, vars)?;
        }
        Ok(h)
    }

    pub fn eval_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut h = rows.to_vec();
        for layer in &self.layers {
            h = layer.eval_rows(&h);
        }
        h
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// Per-location logistic classifier (a 1x1 convolution with one output channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainClassifier {
    pub layer: Dense,
}

impl DomainClassifier {
    pub fn random(features: usize, rng: &mut impl Rng) -> Self {
        Self {
            layer: Dense::glorot(features, 1, Activation::Sigmoid, rng),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> Result<[Var; 2], DaError> {
        self.layer.bind(g)
    }

    /// Probabilities of the target domain, one per row of `features`.
    pub fn apply(&self, g: &mut Graph, features: Var, p: &[Var; 2]) -> Result<Var, DaError> {
        if self.layer.outputs() != 1 || self.layer.activation != Activation::Sigmoid {
            return Err(DaError::ShapeMismatch("domain classifier must be a sigmoid unit".into()));
        }
        self.layer.apply(g, features, p)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.layer.weight, &self.layer.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.layer.weight, &mut self.layer.bias]
    }
}

/// Gradient reversal strength: the backward multiplier is `-r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrlConfig {
    pub r: f64,
}

impl Default for GrlConfig {
    fn default() -> Self {
        Self { r: 1.0 }
    }
}

impl GrlConfig {
    pub fn new(r: f64) -> Result<Self, DaError> {
        if r > 0.0 && r.is_finite() {
            Ok(Self { r })
        } else {
            Err(DaError::BadConfig(format!("GRL magnitude r must be positive, got {r}")))
        }
    }

    pub fn multiplier(&self) -> f64 {
        -self.r
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One descent step; `grads[i]` belongs to `params[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                let m = &mut self.m[k][j];
                let v = &mut self.v[k][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g[j];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g[j] * g[j];
                *x -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}
