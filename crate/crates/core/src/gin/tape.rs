//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Operations are recorded on a [`Tape`] as they are evaluated; `backward`
//! walks the tape in reverse and accumulates gradients for every node.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use super::tensor::Tensor;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TapeError {
    #[error("variable was not recorded on this tape")]
    Unrecorded,
    #[error("backward needs a 1×1 loss, got {0}×{1}")]
    NotScalar(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Hardswish,
    Gelu,
    LeakyRelu,
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hardswish" => Ok(Activation::Hardswish),
            "gelu" => Ok(Activation::Gelu),
            "leaky_relu" | "leakyrelu" => Ok(Activation::LeakyRelu),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Hardswish => x * (x + 3.0).clamp(0.0, 6.0) / 6.0,
            Activation::Gelu => 0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2)),
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Hardswish => {
                if x <= -3.0 {
                    0.0
                } else if x >= 3.0 {
                    1.0
                } else {
                    (2.0 * x + 3.0) / 6.0
                }
            }
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Sum,
    Mean,
    Max,
}

impl std::str::FromStr for Pooling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Pooling::Sum),
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(format!("unknown pooling '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    /// `(1 + eps) · x` with `eps` a 1×1 node.
    OnePlusScale(usize, usize),
    Concat(Vec<usize>),
    Embed {
        table: usize,
        tokens: Arc<Vec<u32>>,
        width: usize,
    },
    /// `out[dst] += in[src]` for every directed edge.
    NeighbourSum {
        input: usize,
        edges: Arc<Vec<(usize, usize)>>,
    },
    Pool {
        input: usize,
        segments: Arc<Vec<usize>>,
        kind: Pooling,
        /// Per output cell, the winning input row for max pooling.
        argmax: Vec<usize>,
        counts: Vec<usize>,
    },
    Act(usize, Activation),
    Dropout(usize, Vec<f64>),
    Sigmoid(usize),
    Bce {
        logits: usize,
        targets: Tensor,
        pos_weight: Vec<f64>,
        mask: Vec<f64>,
        norm: f64,
    },
    Mse(usize, Tensor),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<usize>,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: HashMap<usize, Tensor>,
}

impl Gradients {
    /// Gradient of a recorded node (zeros if the loss does not depend on it).
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.index).and_then(Option::as_ref)
    }

    pub fn param(&self, id: usize) -> Option<&Tensor> {
        self.params.get(&id)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op, param: None });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        v.index
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v)].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Leaf whose gradient is reported under parameter `id`.
    pub fn param(&mut self, t: Tensor, id: usize) -> Var {
        let v = self.push(t, Op::Leaf);
        self.nodes[v.index].param = Some(id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let v = self.nodes[ia].value.matmul(&self.nodes[ib].value);
        self.push(v, Op::MatMul(ia, ib))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let mut v = self.nodes[ia].value.clone();
        v.add_assign(&self.nodes[ib].value);
        self.push(v, Op::Add(ia, ib))
    }

    /// Add a `1 × m` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (ia, ib) = (self.idx(a), self.idx(bias));
        let b = &self.nodes[ib].value;
        let mut v = self.nodes[ia].value.clone();
        assert_eq!(b.shape(), [1, v.cols()], "bias shape");
        for r in 0..v.rows() {
            for (x, y) in v.row_mut(r).iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        self.push(v, Op::AddBias(ia, ib))
    }

    pub fn one_plus_scale(&mut self, a: Var, eps: Var) -> Var {
        let (ia, ie) = (self.idx(a), self.idx(eps));
        let s = 1.0 + self.nodes[ie].value.item();
        let v = self.nodes[ia].value.map(|x| x * s);
        self.push(v, Op::OnePlusScale(ia, ie))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let ids: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect();
        let rows = self.nodes[ids[0]].value.rows();
        let cols: usize = ids.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut v = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &i in &ids {
                let src = self.nodes[i].value.row(r);
                assert_eq!(self.nodes[i].value.rows(), rows, "concat row mismatch");
                v.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        self.push(v, Op::Concat(ids))
    }

    /// Per row, the embeddings of `width` consecutive tokens concatenated.
    /// Token 0 (padding) contributes zeros and receives no gradient.
    pub fn embed(&mut self, table: Var, tokens: Arc<Vec<u32>>, width: usize) -> Var {
        let it = self.idx(table);
        let t = &self.nodes[it].value;
        let l = t.cols();
        let rows = tokens.len() / width;
        let mut v = Tensor::zeros(rows, width * l);
        for (cell, &tok) in tokens.iter().enumerate() {
            assert!((tok as usize) < t.rows(), "token {tok} out of range");
            if tok == 0 {
                continue;
            }
            let (r, j) = (cell / width, cell % width);
            v.row_mut(r)[j * l..(j + 1) * l].copy_from_slice(t.row(tok as usize));
        }
        self.push(v, Op::Embed { table: it, tokens, width })
    }

    pub fn neighbour_sum(&mut self, input: Var, edges: Arc<Vec<(usize, usize)>>) -> Var {
        let ii = self.idx(input);
        let x = &self.nodes[ii].value;
        let mut v = Tensor::zeros(x.rows(), x.cols());
        for &(src, dst) in edges.iter() {
            let s = x.row(src).to_vec();
            for (o, a) in v.row_mut(dst).iter_mut().zip(&s) {
                *o += a;
            }
        }
        self.push(v, Op::NeighbourSum { input: ii, edges })
    }

    /// Pool rows into `n_segments` groups given each row's segment.
    pub fn pool(&mut self, input: Var, segments: Arc<Vec<usize>>, n_segments: usize, kind: Pooling) -> Var {
        let ii = self.idx(input);
        let x = &self.nodes[ii].value;
        let cols = x.cols();
        let mut v = Tensor::zeros(n_segments, cols);
        let mut counts = vec![0usize; n_segments];
        let mut argmax = Vec::new();
        for &s in segments.iter() {
            counts[s] += 1;
        }
        match kind {
            Pooling::Sum | Pooling::Mean => {
                for (r, &s) in segments.iter().enumerate() {
                    for (o, a) in v.row_mut(s).iter_mut().zip(x.row(r)) {
                        *o += a;
                    }
                }
                if kind == Pooling::Mean {
                    for (s, &c) in counts.iter().enumerate() {
                        if c > 0 {
                            for o in v.row_mut(s) {
                                *o /= c as f64;
                            }
                        }
                    }
                }
            }
            Pooling::Max => {
                argmax = vec![usize::MAX; n_segments * cols];
                for (r, &s) in segments.iter().enumerate() {
                    for c in 0..cols {
                        let cell = s * cols + c;
                        let val = x.get(r, c);
                        if argmax[cell] == usize::MAX || val > v.data()[cell] {
                            argmax[cell] = r;
                            v.data_mut()[cell] = val;
                        }
                    }
                }
            }
        }
        self.push(
            v,
            Op::Pool {
                input: ii,
                segments,
                kind,
                argmax,
                counts,
            },
        )
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let ia = self.idx(a);
        let v = self.nodes[ia].value.map(|x| kind.apply(x));
        self.push(v, Op::Act(ia, kind))
    }

    /// Multiply by a fixed mask (already scaled by `1 / (1 - p)`).
    pub fn dropout(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let ia = self.idx(a);
        let x = &self.nodes[ia].value;
        assert_eq!(mask.len(), x.len(), "dropout mask length");
        let data = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let v = Tensor::from_vec(x.rows(), x.cols(), data);
        self.push(v, Op::Dropout(ia, mask))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let v = self.nodes[ia].value.map(sigmoid);
        self.push(v, Op::Sigmoid(ia))
    }

    /// Weighted binary cross-entropy on logits:
    /// `Σ mask_j · (−w_j·y·log σ(z) − (1−y)·log(1−σ(z))) / norm`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Tensor, pos_weight: Vec<f64>, mask: Vec<f64>, norm: f64) -> Var {
        let il = self.idx(logits);
        let z = &self.nodes[il].value;
        assert_eq!(z.shape(), targets.shape(), "bce target shape");
        assert_eq!(pos_weight.len(), z.cols());
        assert_eq!(mask.len(), z.cols());
        let mut total = 0.0;
        for r in 0..z.rows() {
            for c in 0..z.cols() {
                if mask[c] == 0.0 {
                    continue;
                }
                let (x, y) = (z.get(r, c), targets.get(r, c));
                total += mask[c] * (pos_weight[c] * y * softplus(-x) + (1.0 - y) * softplus(x));
            }
        }
        self.push(
            Tensor::scalar(total / norm),
            Op::Bce {
                logits: il,
                targets,
                pos_weight,
                mask,
                norm,
            },
        )
    }

    pub fn mse(&mut self, pred: Var, target: Tensor) -> Var {
        let ip = self.idx(pred);
        let p = &self.nodes[ip].value;
        assert_eq!(p.shape(), target.shape(), "mse target shape");
        let n = p.len().max(1) as f64;
        let s: f64 = p.data().iter().zip(target.data()).map(|(a, b)| (a - b).powi(2)).sum();
        self.push(Tensor::scalar(s / n), Op::Mse(ip, target))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let s = self.nodes[ia].value.sum();
        self.push(Tensor::scalar(s), Op::Sum(ia))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let x = &self.nodes[ia].value;
        let s = x.sum() / x.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(ia))
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients, TapeError> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(TapeError::Unrecorded);
        }
        let lv = &self.nodes[loss.index].value;
        if lv.shape() != [1, 1] {
            return Err(TapeError::NotScalar(lv.rows(), lv.cols()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], i: usize, g: Tensor) {
            match &mut grads[i] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for n in (0..=loss.index).rev() {
            let Some(g) = grads[n].take() else { continue };
            let node = &self.nodes[n];
            let val = |i: usize| &self.nodes[i].value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.matmul_nt(val(*b)));
                    acc(&mut grads, *b, val(*a).matmul_tn(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddBias(a, b) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, gb);
                }
                Op::OnePlusScale(a, e) => {
                    let s = 1.0 + val(*e).item();
                    let ge: f64 = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).sum();
                    acc(&mut grads, *a, g.map(|x| x * s));
                    acc(&mut grads, *e, Tensor::scalar(ge));
                }
                Op::Concat(ids) => {
                    let mut off = 0;
                    for &i in ids {
                        let c = val(i).cols();
                        let mut part = Tensor::zeros(g.rows(), c);
                        for r in 0..g.rows() {
                            part.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                        }
                        off += c;
                        acc(&mut grads, i, part);
                    }
                }
                Op::Embed { table, tokens, width } => {
                    let t = val(*table);
                    let l = t.cols();
                    let mut gt = Tensor::zeros(t.rows(), l);
                    for (cell, &tok) in tokens.iter().enumerate() {
                        if tok == 0 {
                            continue;
                        }
                        let (r, j) = (cell / width, cell % width);
                        let src = &g.row(r)[j * l..(j + 1) * l];
                        for (o, x) in gt.row_mut(tok as usize).iter_mut().zip(src) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::NeighbourSum { input, edges } => {
                    let mut gi = Tensor::zeros(g.rows(), g.cols());
                    for &(src, dst) in edges.iter() {
                        for (o, x) in gi.row_mut(src).iter_mut().zip(g.row(dst)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *input, gi);
                }
                Op::Pool {
                    input,
                    segments,
                    kind,
                    argmax,
                    counts,
                } => {
                    let x = val(*input);
                    let mut gi = Tensor::zeros(x.rows(), x.cols());
                    match kind {
                        Pooling::Sum | Pooling::Mean => {
                            for (r, &s) in segments.iter().enumerate() {
                                let scale = if *kind == Pooling::Mean {
                                    1.0 / counts[s] as f64
                                } else {
                                    1.0
                                };
                                for (o, y) in gi.row_mut(r).iter_mut().zip(g.row(s)) {
                                    *o += y * scale;
                                }
                            }
                        }
                        Pooling::Max => {
                            let cols = x.cols();
                            for (cell, &r) in argmax.iter().enumerate() {
                                if r != usize::MAX {
                                    gi.data_mut()[r * cols + cell % cols] += g.data()[cell];
                                }
                            }
                        }
                    }
                    acc(&mut grads, *input, gi);
                }
                Op::Act(a, kind) => {
                    let x = val(*a);
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(gy, &xv)| gy * kind.derivative(xv))
                        .collect();
                    acc(&mut grads, *a, Tensor::from_vec(x.rows(), x.cols(), data));
                }
                Op::Dropout(a, mask) => {
                    let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                    acc(&mut grads, *a, Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::Sigmoid(a) => {
                    let data = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(gy, s)| gy * s * (1.0 - s))
                        .collect();
                    acc(&mut grads, *a, Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::Bce {
                    logits,
                    targets,
                    pos_weight,
                    mask,
                    norm,
                } => {
                    let z = val(*logits);
                    let up = g.item() / norm;
                    let mut gz = Tensor::zeros(z.rows(), z.cols());
                    for r in 0..z.rows() {
                        for c in 0..z.cols() {
                            if mask[c] == 0.0 {
                                continue;
                            }
                            let s = sigmoid(z.get(r, c));
                            let y = targets.get(r, c);
                            let d = -pos_weight[c] * y * (1.0 - s) + (1.0 - y) * s;
                            gz.data_mut()[r * z.cols() + c] = up * mask[c] * d;
                        }
                    }
                    acc(&mut grads, *logits, gz);
                }
                Op::Mse(p, target) => {
                    let x = val(*p);
                    let scale = 2.0 * g.item() / x.len().max(1) as f64;
                    let data = x.data().iter().zip(target.data()).map(|(a, b)| scale * (a - b)).collect();
                    acc(&mut grads, *p, Tensor::from_vec(x.rows(), x.cols(), data));
                }
                Op::Sum(a) => {
                    let x = val(*a);
                    acc(&mut grads, *a, Tensor::filled(x.rows(), x.cols(), g.item()));
                }
                Op::Mean(a) => {
                    let x = val(*a);
                    let v = g.item() / x.len().max(1) as f64;
                    acc(&mut grads, *a, Tensor::filled(x.rows(), x.cols(), v));
                }
            }
            grads[n] = Some(g);
        }

        let mut params = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(pid) = node.param {
                let g = grads[i]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.value.rows(), node.value.cols()));
                match params.get_mut(&pid) {
                    Some(t) => Tensor::add_assign(t, &g),
                    None => {
                        params.insert(pid, g);
                    }
                }
            }
        }
        Ok(Gradients { nodes: grads, params })
    }
}
