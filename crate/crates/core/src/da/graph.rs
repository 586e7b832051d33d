//! Reverse-mode differentiation over 2-D arrays on a tape.

use super::{DaError, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `[m, n] + [1, n]` broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    /// Identity forward; the backward gradient is multiplied by the constant.
    Grl(Var, f64),
    Clamp(Var, f64, f64),
    Log(Var),
    OneMinus(Var),
    Abs(Var),
    Mean(Var),
    Sum(Var),
    SoftmaxCe(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    requires_grad: bool,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(what: &str, a: (usize, usize), b: (usize, usize)) -> DaError {
    DaError::ShapeMismatch(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) | Op::Sub(a, b) => {
                self.requires_grad(*a) || self.requires_grad(*b)
            }
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Grl(a, _)
            | Op::Clamp(a, _, _)
            | Op::Log(a)
            | Op::OneMinus(a)
            | Op::Abs(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::SoftmaxCe(a, _) => self.requires_grad(*a),
        };
        self.nodes.push(Node {
            requires_grad,
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf from a 1-D or 2-D tensor; 1-D tensors become a single row.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var, DaError> {
        let (r, c) = match t.shape() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => return Err(DaError::ShapeMismatch(format!("leaf must be 1-D or 2-D, got {s:?}"))),
        };
        Ok(self.push(r, c, t.data().to_vec(), Op::Leaf))
    }

    pub fn leaf_from(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var, DaError> {
        if rows * cols != value.len() || rows == 0 || cols == 0 {
            return Err(DaError::ShapeMismatch(format!(
                "{rows}x{cols} leaf with {} values",
                value.len()
            )));
        }
        Ok(self.push(rows, cols, value, Op::Leaf))
    }

    /// Leaf that never receives a gradient (pooling matrices, inputs).
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var, DaError> {
        let v = self.leaf_from(rows, cols, value)?;
        self.nodes[v.0].requires_grad = false;
        Ok(v)
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DaError> {
        let ((m, k), (k2, n)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(mismatch("matmul", (m, k), (k2, n)));
        }
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += x * bv[p * n + j];
                }
            }
        }
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, DaError> {
        let ((m, n), (one, n2)) = (self.dims(a), self.dims(bias));
        if one != 1 || n != n2 {
            return Err(mismatch("add_row", (m, n), (one, n2)));
        }
        let b = &self.nodes[bias.0].value;
        let out = self.nodes[a.0]
            .value
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % n])
            .collect();
        Ok(self.push(m, n, out, Op::AddRow(a, bias)))
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: fn(f64, f64) -> f64, op: Op) -> Result<Var, DaError> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(mismatch(what, da, db));
        }
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.push(da.0, da.1, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DaError> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DaError> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.dims(a);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(r, c, out, op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Gradient reversal: identity forward, gradient times `-r` backward.
    pub fn grl(&mut self, a: Var, r: f64) -> Var {
        self.grl_with_multiplier(a, -r)
    }

    #[doc(hidden)]
    pub fn grl_with_multiplier(&mut self, a: Var, multiplier: f64) -> Var {
        self.unary(a, |x| x, Op::Grl(a, multiplier))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(1, 1, vec![m], Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum::<f64>();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// Mean softmax cross-entropy of `[n, classes]` logits.
    pub fn softmax_ce(&mut self, logits: Var, labels: &[usize]) -> Result<Var, DaError> {
        let (n, c) = self.dims(logits);
        if labels.len() != n || labels.iter().any(|&l| l >= c) {
            return Err(DaError::ShapeMismatch(format!(
                "{} labels for {n}x{c} logits",
                labels.len()
            )));
        }
        let v = &self.nodes[logits.0].value;
        let loss = (0..n)
            .map(|i| {
                let row = &v[i * c..(i + 1) * c];
                log_sum_exp(row) - row[labels[i]]
            })
            .sum::<f64>()
            / n as f64;
        Ok(self.push(1, 1, vec![loss], Op::SoftmaxCe(logits, labels.to_vec())))
    }

    /// Gradients of the one-element node `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.nodes[output.0].value.len(), 1, "backward needs a scalar output");
        let mut g: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        g[output.0][0] = 1.0;
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let up = std::mem::take(&mut g[i]);
            if up.iter().all(|&x| x == 0.0) {
                g[i] = up;
                continue;
            }
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(*a);
                    let n = node.cols;
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for r in 0..m {
                        if !self.requires_grad(*a) {
                            break;
                        }
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += up[r * n + j] * bv[p * n + j];
                            }
                            g[a.0][r * k + p] += s;
                        }
                    }
                    for r in 0..m {
                        if !self.requires_grad(*b) {
                            break;
                        }
                        for p in 0..k {
                            let x = av[r * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                g[b.0][p * n + j] += x * up[r * n + j];
                            }
                        }
                    }
                }
                Op::AddRow(a, b) => {
                    let n = node.cols;
                    for (j, u) in up.iter().enumerate() {
                        g[a.0][j] += u;
                        g[b.0][j % n] += u;
                    }
                }
                Op::Add(a, b) => {
                    for (j, u) in up.iter().enumerate() {
                        g[a.0][j] += u;
                        g[b.0][j] += u;
                    }
                }
                Op::Sub(a, b) => {
                    for (j, u) in up.iter().enumerate() {
                        g[a.0][j] += u;
                        g[b.0][j] -= u;
                    }
                }
                Op::Scale(a, s) => each(&mut g[a.0], &up, |_| *s),
                Op::Tanh(a) => each(&mut g[a.0], &up, |j| 1.0 - y[j] * y[j]),
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    each(&mut g[a.0], &up, |j| if x[j] > 0.0 { 1.0 } else { 0.0 })
                }
                Op::Sigmoid(a) => each(&mut g[a.0], &up, |j| y[j] * (1.0 - y[j])),
                Op::Grl(a, m) => each(&mut g[a.0], &up, |_| *m),
                Op::Clamp(a, lo, hi) => {
                    let x = &self.nodes[a.0].value;
                    each(&mut g[a.0], &up, |j| if x[j] >= *lo && x[j] <= *hi { 1.0 } else { 0.0 })
                }
                Op::Log(a) => {
                    let x = &self.nodes[a.0].value;
                    each(&mut g[a.0], &up, |j| 1.0 / x[j])
                }
                Op::OneMinus(a) => each(&mut g[a.0], &up, |_| -1.0),
                Op::Abs(a) => {
                    let x = &self.nodes[a.0].value;
                    each(&mut g[a.0], &up, |j| sign(x[j]))
                }
                Op::Mean(a) => {
                    let n = g[a.0].len() as f64;
                    for v in g[a.0].iter_mut() {
                        *v += up[0] / n;
                    }
                }
                Op::Sum(a) => {
                    for v in g[a.0].iter_mut() {
                        *v += up[0];
                    }
                }
                Op::SoftmaxCe(a, labels) => {
                    let (n, c) = self.dims(*a);
                    let v = &self.nodes[a.0].value;
                    for r in 0..n {
                        let row = &v[r * c..(r + 1) * c];
                        let lse = log_sum_exp(row);
                        for j in 0..c {
                            let p = (row[j] - lse).exp();
                            let t = if j == labels[r] { 1.0 } else { 0.0 };
                            g[a.0][r * c + j] += up[0] * (p - t) / n as f64;
                        }
                    }
                }
            }
            g[i] = up;
        }
        Gradients { grads: g }
    }
}

fn each(dst: &mut [f64], up: &[f64], d: impl Fn(usize) -> f64) {
    for (j, u) in up.iter().enumerate() {
        dst[j] += u * d(j);
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Per-node gradients from [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }
}
