//! Reverse-mode differentiation over a linear recording of matrix ops.
//!
//! Every op appends a node holding its output value and whatever it needs
//! for the backward pass. [`Tape::backward`] walks the nodes in exact reverse
//! order of recording, accumulating gradients only along paths that reach a
//! trainable leaf.

use std::sync::Arc;

use rand::Rng;

use super::dense::{softmax_in_place, DenseMatrix};
use super::sparse::{CsrMatrix, SparseLinear};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Whether stochastic ops (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    SpMM {
        op: SparseLinear,
        input: Var,
    },
    MatMul {
        lhs: Var,
        rhs: Var,
    },
    AddBias {
        input: Var,
        bias: Var,
    },
    Relu {
        input: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    RowSoftmax {
        input: Var,
    },
    Sigmoid {
        input: Var,
    },
    Add {
        lhs: Var,
        rhs: Var,
    },
    Sub {
        lhs: Var,
        rhs: Var,
    },
    RowScale {
        scale: Var,
        input: Var,
    },
    EdgeSoftmax {
        pattern: Arc<CsrMatrix>,
        scores: Var,
    },
    Propagate {
        pattern: Arc<CsrMatrix>,
        weights: Var,
        input: Var,
    },
    ClampRows {
        input: Var,
        rows: Arc<Vec<usize>>,
    },
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Takes the gradient of `v`, or zeros of `shape` if nothing reached it.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> DenseMatrix {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| DenseMatrix::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    fn push(
        &mut self,
        value: DenseMatrix,
        op: Op,
        needs_grad: bool,
        name: &'static str,
    ) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push(value, Op::Leaf, true, "param")
    }

    /// Records a leaf that receives no gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    pub fn spmm(&mut self, op: &SparseLinear, input: Var) -> Result<Var> {
        let value = op.matrix().matmul_dense(self.value(input))?;
        let needs = self.needs(input);
        self.push(
            value,
            Op::SpMM {
                op: op.clone(),
                input,
            },
            needs,
            "spmm",
        )
    }

    pub fn matmul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let value = self.value(lhs).matmul(self.value(rhs))?;
        let needs = self.needs(lhs) || self.needs(rhs);
        self.push(value, Op::MatMul { lhs, rhs }, needs, "matmul")
    }

    /// Adds a `1 x c` bias row to every row of `input`.
    pub fn add_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(input), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} for input {:?}", b.shape(), x.shape()),
            ));
        }
        let mut value = x.clone();
        for r in 0..value.rows() {
            for (d, s) in value.row_mut(r).iter_mut().zip(b.row(0)) {
                *d += s;
            }
        }
        let needs = self.needs(input) || self.needs(bias);
        self.push(value, Op::AddBias { input, bias }, needs, "add_bias")
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let mut value = self.value(input).clone();
        for v in value.data_mut() {
            *v = v.max(0.0);
        }
        let needs = self.needs(input);
        self.push(value, Op::Relu { input }, needs, "relu")
    }

    /// The "no activation" choice: returns `input` unchanged.
    pub fn identity(&mut self, input: Var) -> Var {
        input
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&DenseMatrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = DenseMatrix::hconcat(&mats)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
            needs,
            "concat",
        )
    }

    /// Inverted dropout. Identity in eval mode or when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0,1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let x = self.value(input);
        let mask: Vec<f64> = (0..x.data().len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = DenseMatrix::from_vec(x.rows(), x.cols(), data)?;
        let needs = self.needs(input);
        self.push(value, Op::Dropout { input, mask }, needs, "dropout")
    }

    pub fn row_softmax(&mut self, input: Var) -> Result<Var> {
        let value = self.value(input).row_softmax();
        let needs = self.needs(input);
        self.push(value, Op::RowSoftmax { input }, needs, "row_softmax")
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let mut value = self.value(input).clone();
        for v in value.data_mut() {
            *v = sigmoid(*v);
        }
        let needs = self.needs(input);
        self.push(value, Op::Sigmoid { input }, needs, "sigmoid")
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.elementwise(lhs, rhs, false)
    }

    pub fn sub(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.elementwise(lhs, rhs, true)
    }

    fn elementwise(&mut self, lhs: Var, rhs: Var, subtract: bool) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(Error::shape(
                "add/sub",
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        let sign = if subtract { -1.0 } else { 1.0 };
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x + sign * y)
            .collect();
        let value = DenseMatrix::from_vec(a.rows(), a.cols(), data)?;
        let needs = self.needs(lhs) || self.needs(rhs);
        let op = if subtract {
            Op::Sub { lhs, rhs }
        } else {
            Op::Add { lhs, rhs }
        };
        self.push(value, op, needs, "add/sub")
    }

    /// Multiplies row `r` of `input` by `scale[r]`; `scale` is `n x 1`.
    pub fn row_scale(&mut self, scale: Var, input: Var) -> Result<Var> {
        let (s, x) = (self.value(scale), self.value(input));
        if s.cols() != 1 || s.rows() != x.rows() {
            return Err(Error::shape(
                "row_scale",
                format!("scale {:?} for {:?}", s.shape(), x.shape()),
            ));
        }
        let mut value = x.clone();
        for r in 0..value.rows() {
            let f = s.get(r, 0);
            value.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        let needs = self.needs(scale) || self.needs(input);
        self.push(value, Op::RowScale { scale, input }, needs, "row_scale")
    }

    /// Per-row softmax of node scores over a sparsity pattern: entry `k` of
    /// row `v` becomes `exp(s[col_k]) / sum_{j in row v} exp(s[col_j])`.
    /// Output is `nnz x 1`, aligned with the pattern's storage order.
    pub fn edge_softmax(&mut self, pattern: &Arc<CsrMatrix>, scores: Var) -> Result<Var> {
        let s = self.value(scores);
        if s.cols() != 1 || s.rows() != pattern.cols() {
            return Err(Error::shape(
                "edge_softmax",
                format!(
                    "scores {:?} for pattern with {} columns",
                    s.shape(),
                    pattern.cols()
                ),
            ));
        }
        let mut w = Vec::with_capacity(pattern.nnz());
        for r in 0..pattern.rows() {
            let start = w.len();
            let (cols, _) = pattern.row(r);
            w.extend(cols.iter().map(|&c| s.get(c, 0)));
            softmax_in_place(&mut w[start..]);
        }
        let value = DenseMatrix::from_vec(pattern.nnz(), 1, w)?;
        let needs = self.needs(scores);
        self.push(
            value,
            Op::EdgeSoftmax {
                pattern: Arc::clone(pattern),
                scores,
            },
            needs,
            "edge_softmax",
        )
    }

    /// `out[v] = sum_k weights[k] * input[col_k]` over row `v` of `pattern`.
    pub fn propagate(&mut self, pattern: &Arc<CsrMatrix>, weights: Var, input: Var) -> Result<Var> {
        let (w, x) = (self.value(weights), self.value(input));
        if w.cols() != 1 || w.rows() != pattern.nnz() || x.rows() != pattern.cols() {
            return Err(Error::shape(
                "propagate",
                format!(
                    "weights {:?}, input {:?}, pattern nnz {}",
                    w.shape(),
                    x.shape(),
                    pattern.nnz()
                ),
            ));
        }
        let weighted = pattern.with_values(w.data().to_vec());
        let value = weighted.matmul_dense(x)?;
        let needs = self.needs(weights) || self.needs(input);
        self.push(
            value,
            Op::Propagate {
                pattern: Arc::clone(pattern),
                weights,
                input,
            },
            needs,
            "propagate",
        )
    }

    /// Overwrites the listed rows with the matching rows of `targets`
    /// (one target row per listed index). No gradient flows through them.
    pub fn clamp_rows(
        &mut self,
        input: Var,
        rows: &Arc<Vec<usize>>,
        targets: &DenseMatrix,
    ) -> Result<Var> {
        let x = self.value(input);
        if targets.rows() != rows.len() || targets.cols() != x.cols() {
            return Err(Error::shape(
                "clamp_rows",
                "targets do not match clamped rows",
            ));
        }
        let mut value = x.clone();
        for (i, &r) in rows.iter().enumerate() {
            if r >= value.rows() {
                return Err(Error::shape("clamp_rows", format!("row {r} out of range")));
            }
            value.row_mut(r).copy_from_slice(targets.row(i));
        }
        let needs = self.needs(input);
        self.push(
            value,
            Op::ClampRows {
                input,
                rows: Arc::clone(rows),
            },
            needs,
            "clamp_rows",
        )
    }

    /// Back-propagates `seed` (the gradient of a scalar loss w.r.t. `output`).
    pub fn backward(&self, output: Var, seed: DenseMatrix) -> Result<Gradients> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                "backward",
                "seed gradient shape differs from output",
            ));
        }
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backward_node(
        &self,
        node: &Node,
        g: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::SpMM { op, input } => {
                let dx = op.adjoint().matmul_dense(g)?;
                self.accumulate(grads, *input, dx);
            }
            Op::MatMul { lhs, rhs } => {
                if self.needs(*lhs) {
                    let da = g.gemm(false, self.value(*rhs), true)?;
                    self.accumulate(grads, *lhs, da);
                }
                if self.needs(*rhs) {
                    let db = self.value(*lhs).gemm(true, g, false)?;
                    self.accumulate(grads, *rhs, db);
                }
            }
            Op::AddBias { input, bias } => {
                self.accumulate(grads, *input, g.clone());
                if self.needs(*bias) {
                    let mut db = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, s) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    self.accumulate(grads, *bias, db);
                }
            }
            Op::Relu { input } => {
                let mut dx = g.clone();
                for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    if y <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.accumulate(grads, *input, dx);
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs(p) {
                        let mut dp = DenseMatrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        self.accumulate(grads, p, dp);
                    }
                    off += w;
                }
            }
            Op::Dropout { input, mask } => {
                let mut dx = g.clone();
                for (d, m) in dx.data_mut().iter_mut().zip(mask) {
                    *d *= m;
                }
                self.accumulate(grads, *input, dx);
            }
            Op::RowSoftmax { input } => {
                let s = &node.value;
                let mut dx = DenseMatrix::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let dot: f64 = g.row(r).iter().zip(s.row(r)).map(|(a, b)| a * b).sum();
                    for ((d, &gi), &si) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(s.row(r)) {
                        *d = si * (gi - dot);
                    }
                }
                self.accumulate(grads, *input, dx);
            }
            Op::Sigmoid { input } => {
                let mut dx = g.clone();
                for (d, &s) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    *d *= s * (1.0 - s);
                }
                self.accumulate(grads, *input, dx);
            }
            Op::Add { lhs, rhs } => {
                self.accumulate(grads, *lhs, g.clone());
                self.accumulate(grads, *rhs, g.clone());
            }
            Op::Sub { lhs, rhs } => {
                self.accumulate(grads, *lhs, g.clone());
                if self.needs(*rhs) {
                    let mut neg = g.clone();
                    neg.scale(-1.0);
                    self.accumulate(grads, *rhs, neg);
                }
            }
            Op::RowScale { scale, input } => {
                let (s, x) = (self.value(*scale), self.value(*input));
                if self.needs(*input) {
                    let mut dx = g.clone();
                    for r in 0..dx.rows() {
                        let f = s.get(r, 0);
                        dx.row_mut(r).iter_mut().for_each(|v| *v *= f);
                    }
                    self.accumulate(grads, *input, dx);
                }
                if self.needs(*scale) {
                    let mut ds = DenseMatrix::zeros(s.rows(), 1);
                    for r in 0..x.rows() {
                        let dot: f64 = g.row(r).iter().zip(x.row(r)).map(|(a, b)| a * b).sum();
                        ds.set(r, 0, dot);
                    }
                    self.accumulate(grads, *scale, ds);
                }
            }
            Op::EdgeSoftmax { pattern, scores } => {
                let w = node.value.data();
                let gw = g.data();
                let mut ds = DenseMatrix::zeros(pattern.cols(), 1);
                for r in 0..pattern.rows() {
                    let span = pattern.indptr()[r]..pattern.indptr()[r + 1];
                    let dot: f64 = span.clone().map(|k| gw[k] * w[k]).sum();
                    for k in span {
                        let c = pattern.indices()[k];
                        ds.data_mut()[c] += w[k] * (gw[k] - dot);
                    }
                }
                self.accumulate(grads, *scores, ds);
            }
            Op::Propagate {
                pattern,
                weights,
                input,
            } => {
                let (w, x) = (self.value(*weights), self.value(*input));
                if self.needs(*weights) {
                    let mut dw = DenseMatrix::zeros(pattern.nnz(), 1);
                    for r in 0..pattern.rows() {
                        for k in pattern.indptr()[r]..pattern.indptr()[r + 1] {
                            let c = pattern.indices()[k];
                            let dot: f64 = g.row(r).iter().zip(x.row(c)).map(|(a, b)| a * b).sum();
                            dw.data_mut()[k] = dot;
                        }
                    }
                    self.accumulate(grads, *weights, dw);
                }
                if self.needs(*input) {
                    let adjoint = pattern.with_values(w.data().to_vec()).transpose();
                    let dx = adjoint.matmul_dense(g)?;
                    self.accumulate(grads, *input, dx);
                }
            }
            Op::ClampRows { input, rows } => {
                let mut dx = g.clone();
                for &r in rows.iter() {
                    dx.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
                }
                self.accumulate(grads, *input, dx);
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
