//! Wengert-list reverse-mode differentiation.
//!
//! Every operation computes its forward result in f64 regardless of the
//! stored scalar type, rounds once into `S`, and records enough structure to
//! replay the chain rule backward. Gradients are accumulated in f64 buffers
//! in fixed tape order, so repeated backward passes over the same tape are
//! bitwise identical.

use super::Tensor;
use crate::error::{CiaError, Result};
use crate::scalar::Scalar;

/// Handle to a tensor recorded on a tape. Only meaningful for the tape that
/// issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    Matmul(TensorId, TensorId),
    Transpose(TensorId),
    Log(TensorId),
    Exp(TensorId),
    Tanh(TensorId),
    SoftmaxRows(TensorId),
    Sum(TensorId),
    SliceRows(TensorId, usize, usize),
    Reshape(TensorId),
    Broadcast(TensorId),
    GatherFlat(TensorId, Vec<usize>),
    CrossEntropy(TensorId, usize),
    CeMeanRows {
        logits: TensorId,
        row_start: usize,
        targets: Vec<usize>,
    },
}

struct Node<S> {
    tensor: Tensor<S>,
    op: Op,
}

/// Operation selector for the generic dispatch entry point, used by tests
/// that sweep every primitive through the same gradient-check harness.
#[derive(Clone, Debug)]
pub enum PrimitiveOp {
    Add,
    Mul,
    Scale(f64),
    Matmul,
    Transpose,
    Log,
    Exp,
    Tanh,
    Softmax,
    Sum,
    Slice { start: usize, end: usize },
    Reshape(Vec<usize>),
    Broadcast(Vec<usize>),
    GatherFlat(Vec<usize>),
    CrossEntropy { target: usize },
    CeMeanRows { row_start: usize, targets: Vec<usize> },
}

/// Gradients of one backward pass, indexed by the ids of the originating tape.
pub struct GradientMap<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> GradientMap<S> {
    /// Gradient of the backward root with respect to the given tensor, if the
    /// root depends on it.
    pub fn wrt(&self, id: TensorId) -> Option<&Tensor<S>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// −log softmax(logits)[target], max-subtracted for stability. Shared by the
/// tape ops and the off-tape diagnostics so both report identical values.
pub fn stable_cross_entropy(logits: &[f64], target: usize) -> f64 {
    debug_assert!(target < logits.len());
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - m).exp()).sum();
    (m + sum.ln()) - logits[target]
}

/// softmax with max-subtraction; exact zeros for inputs ≤ m − 746 (used by
/// the causal mask, which relies on masked probabilities being exactly 0).
pub fn stable_softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a differentiation input (a tensor gradients are wanted for).
    pub fn input(&mut self, tensor: Tensor<S>) -> TensorId {
        self.push_node(tensor, Op::Leaf)
    }

    /// Record a fixed tensor. Structurally identical to `input`; the name
    /// documents intent at call sites (weights, masks, embeddings).
    pub fn constant(&mut self, tensor: Tensor<S>) -> TensorId {
        self.push_node(tensor, Op::Leaf)
    }

    pub fn value(&self, id: TensorId) -> Result<&Tensor<S>> {
        self.nodes
            .get(id.0)
            .map(|n| &n.tensor)
            .ok_or(CiaError::UnknownTensor { id: id.0 })
    }

    fn push_node(&mut self, tensor: Tensor<S>, op: Op) -> TensorId {
        self.nodes.push(Node { tensor, op });
        TensorId(self.nodes.len() - 1)
    }

    fn check_id(&self, id: TensorId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(CiaError::UnknownTensor { id: id.0 })
        }
    }

    fn tensor(&self, id: TensorId) -> &Tensor<S> {
        &self.nodes[id.0].tensor
    }

    /// Round f64 results into `S`, enforce finiteness, and record the node.
    fn push_result(
        &mut self,
        op_name: &'static str,
        shape: Vec<usize>,
        values: Vec<f64>,
        op: Op,
    ) -> Result<TensorId> {
        let tensor = Tensor {
            shape,
            values: values.into_iter().map(S::of_f64).collect(),
        };
        tensor.check_finite(op_name)?;
        Ok(self.push_node(tensor, op))
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn binary_elementwise(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        if ta.shape() != tb.shape() {
            return Err(CiaError::ShapeMismatch {
                op: name,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let shape = ta.shape().to_vec();
        let values: Vec<f64> = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(x, y)| f(x.as_f64(), y.as_f64()))
            .collect();
        self.push_result(name, shape, values, op)
    }

    /// Multiply every element by a fixed constant.
    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        let shape = ta.shape().to_vec();
        let values: Vec<f64> = ta.values().iter().map(|x| x.as_f64() * c).collect();
        self.push_result("scale", shape, values, Op::Scale(a, c))
    }

    fn unary_elementwise(
        &mut self,
        name: &'static str,
        a: TensorId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        let shape = ta.shape().to_vec();
        let values: Vec<f64> = ta.values().iter().map(|x| f(x.as_f64())).collect();
        self.push_result(name, shape, values, op)
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary_elementwise("log", a, f64::ln, Op::Log(a))
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary_elementwise("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary_elementwise("tanh", a, f64::tanh, Op::Tanh(a))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (ta, tb) = (self.tensor(a), self.tensor(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(CiaError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let n = tb.shape()[1];
        let av = ta.values();
        let bv = tb.values();
        let mut out = vec![0.0f64; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p].as_f64();
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j].as_f64();
                }
            }
        }
        self.push_result("matmul", vec![m, n], out, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        if ta.rank() != 2 {
            return Err(CiaError::BadOperand {
                op: "transpose",
                message: format!("expected rank 2, got shape {:?}", ta.shape()),
            });
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let v = ta.values();
        let mut out = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j].as_f64();
            }
        }
        self.push_result("transpose", vec![n, m], out, Op::Transpose(a))
    }

    // ---- shape manipulation ----

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        let expect: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || expect != ta.len() {
            return Err(CiaError::BadOperand {
                op: "reshape",
                message: format!("cannot reshape {:?} into {shape:?}", ta.shape()),
            });
        }
        let values = ta.values_f64();
        self.push_result("reshape", shape, values, Op::Reshape(a))
    }

    /// Expand size-1 axes of `a` to the target shape (ranks must match).
    pub fn broadcast(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        let src = ta.shape().to_vec();
        let ok = src.len() == shape.len()
            && src
                .iter()
                .zip(&shape)
                .all(|(&s, &t)| s == t || (s == 1 && t >= 1));
        if !ok || shape.iter().any(|&d| d == 0) {
            return Err(CiaError::ShapeMismatch {
                op: "broadcast",
                lhs: src,
                rhs: shape,
            });
        }
        let total: usize = shape.iter().product();
        let mut out = Vec::with_capacity(total);
        let v = ta.values();
        for flat in 0..total {
            out.push(v[broadcast_source_index(flat, &shape, &src)].as_f64());
        }
        self.push_result("broadcast", shape, out, Op::Broadcast(a))
    }

    /// Rows `start..end` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: TensorId, start: usize, end: usize) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        if ta.rank() != 2 {
            return Err(CiaError::BadOperand {
                op: "slice",
                message: format!("expected rank 2, got shape {:?}", ta.shape()),
            });
        }
        let (rows, cols) = (ta.shape()[0], ta.shape()[1]);
        if start >= end || end > rows {
            return Err(CiaError::BadOperand {
                op: "slice",
                message: format!("row range {start}..{end} invalid for {rows} rows"),
            });
        }
        let values: Vec<f64> = ta.values()[start * cols..end * cols]
            .iter()
            .map(|v| v.as_f64())
            .collect();
        self.push_result(
            "slice",
            vec![end - start, cols],
            values,
            Op::SliceRows(a, start, end),
        )
    }

    /// out[j] = a.flat[indices[j]]; the output is rank 1. Used to reorder
    /// image pixels into patch-major order with gradient flow preserved.
    pub fn gather_flat(&mut self, a: TensorId, indices: Vec<usize>) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        if indices.is_empty() {
            return Err(CiaError::BadOperand {
                op: "gather",
                message: "empty index list".to_string(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= ta.len()) {
            return Err(CiaError::BadOperand {
                op: "gather",
                message: format!("index {bad} out of range for {} elements", ta.len()),
            });
        }
        let v = ta.values();
        let out: Vec<f64> = indices.iter().map(|&i| v[i].as_f64()).collect();
        let shape = vec![out.len()];
        self.push_result("gather", shape, out, Op::GatherFlat(a, indices))
    }

    // ---- reductions and probability ops ----

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_id(a)?;
        let total: f64 = self.tensor(a).values().iter().map(|v| v.as_f64()).sum();
        self.push_result("sum", vec![1], vec![total], Op::Sum(a))
    }

    /// Arithmetic mean of all elements: sum followed by a constant scale.
    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_id(a)?;
        let n = self.tensor(a).len();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Row-wise softmax; accepts rank 1 (one row) or rank 2.
    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        let (rows, cols) = match ta.rank() {
            1 => (1, ta.shape()[0]),
            2 => (ta.shape()[0], ta.shape()[1]),
            _ => {
                return Err(CiaError::BadOperand {
                    op: "softmax",
                    message: format!("expected rank 1 or 2, got shape {:?}", ta.shape()),
                })
            }
        };
        let shape = ta.shape().to_vec();
        let v = ta.values();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let row: Vec<f64> = v[r * cols..(r + 1) * cols]
                .iter()
                .map(|x| x.as_f64())
                .collect();
            out.extend(stable_softmax(&row));
        }
        self.push_result("softmax", shape, out, Op::SoftmaxRows(a))
    }

    /// −log p(target) from a logit vector of length V (rank 1, or rank-2 1×V).
    pub fn cross_entropy_from_logits(&mut self, a: TensorId, target: usize) -> Result<TensorId> {
        self.check_id(a)?;
        let ta = self.tensor(a);
        let v = match (ta.rank(), ta.shape()) {
            (1, s) => s[0],
            (2, s) if s[0] == 1 => s[1],
            _ => {
                return Err(CiaError::BadOperand {
                    op: "cross_entropy",
                    message: format!("expected a logit vector, got shape {:?}", ta.shape()),
                })
            }
        };
        if v < 2 {
            return Err(CiaError::BadOperand {
                op: "cross_entropy",
                message: format!("vocabulary of {v} is too small"),
            });
        }
        if target >= v {
            return Err(CiaError::TargetOutOfRange { index: target, vocab: v });
        }
        let logits = ta.values_f64();
        let ce = stable_cross_entropy(&logits, target);
        self.push_result("cross_entropy", vec![1], vec![ce], Op::CrossEntropy(a, target))
    }

    /// Mean cross-entropy of `targets[i]` against logit row `row_start + i`.
    ///
    /// The per-row values are summed in ascending value order, so the result
    /// is exactly invariant under any permutation of (rows, targets) pairs —
    /// the segment losses rely on this for their symmetry guarantee.
    pub fn ce_mean_rows(
        &mut self,
        logits: TensorId,
        row_start: usize,
        targets: &[usize],
    ) -> Result<TensorId> {
        self.check_id(logits)?;
        let ta = self.tensor(logits);
        if ta.rank() != 2 {
            return Err(CiaError::BadOperand {
                op: "ce_mean_rows",
                message: format!("expected rank-2 logits, got shape {:?}", ta.shape()),
            });
        }
        let (rows, v) = (ta.shape()[0], ta.shape()[1]);
        if targets.is_empty() {
            return Err(CiaError::BadOperand {
                op: "ce_mean_rows",
                message: "empty target list".to_string(),
            });
        }
        if v < 2 {
            return Err(CiaError::BadOperand {
                op: "ce_mean_rows",
                message: format!("vocabulary of {v} is too small"),
            });
        }
        if row_start + targets.len() > rows {
            return Err(CiaError::BadOperand {
                op: "ce_mean_rows",
                message: format!(
                    "rows {row_start}..{} exceed {rows} logit rows",
                    row_start + targets.len()
                ),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(CiaError::TargetOutOfRange { index: bad, vocab: v });
        }
        let vals = ta.values();
        let mut ces: Vec<f64> = Vec::with_capacity(targets.len());
        for (i, &t) in targets.iter().enumerate() {
            let r = row_start + i;
            let row: Vec<f64> = vals[r * v..(r + 1) * v].iter().map(|x| x.as_f64()).collect();
            ces.push(stable_cross_entropy(&row, t));
        }
        ces.sort_by(f64::total_cmp);
        let mean = ces.iter().sum::<f64>() / targets.len() as f64;
        self.push_result(
            "ce_mean_rows",
            vec![1],
            vec![mean],
            Op::CeMeanRows {
                logits,
                row_start,
                targets: targets.to_vec(),
            },
        )
    }

    /// Generic dispatch over the primitive set; unary ops take one id, binary
    /// ops two.
    pub fn apply(&mut self, op: PrimitiveOp, inputs: &[TensorId]) -> Result<TensorId> {
        let want = match op {
            PrimitiveOp::Add | PrimitiveOp::Mul | PrimitiveOp::Matmul => 2,
            _ => 1,
        };
        if inputs.len() != want {
            return Err(CiaError::BadOperand {
                op: "apply",
                message: format!("{op:?} expects {want} inputs, got {}", inputs.len()),
            });
        }
        match op {
            PrimitiveOp::Add => self.add(inputs[0], inputs[1]),
            PrimitiveOp::Mul => self.mul(inputs[0], inputs[1]),
            PrimitiveOp::Scale(c) => self.scale(inputs[0], c),
            PrimitiveOp::Matmul => self.matmul(inputs[0], inputs[1]),
            PrimitiveOp::Transpose => self.transpose(inputs[0]),
            PrimitiveOp::Log => self.log(inputs[0]),
            PrimitiveOp::Exp => self.exp(inputs[0]),
            PrimitiveOp::Tanh => self.tanh(inputs[0]),
            PrimitiveOp::Softmax => self.softmax(inputs[0]),
            PrimitiveOp::Sum => self.sum(inputs[0]),
            PrimitiveOp::Slice { start, end } => self.slice_rows(inputs[0], start, end),
            PrimitiveOp::Reshape(shape) => self.reshape(inputs[0], shape),
            PrimitiveOp::Broadcast(shape) => self.broadcast(inputs[0], shape),
            PrimitiveOp::GatherFlat(indices) => self.gather_flat(inputs[0], indices),
            PrimitiveOp::CrossEntropy { target } => {
                self.cross_entropy_from_logits(inputs[0], target)
            }
            PrimitiveOp::CeMeanRows { row_start, targets } => {
                self.ce_mean_rows(inputs[0], row_start, &targets)
            }
        }
    }

    // ---- backward ----

    /// Reverse sweep from a scalar root. Visits each recorded node once, in
    /// reverse tape order; accumulation happens in f64 and is rounded to `S`
    /// only when the map is materialized.
    pub fn backward(&self, root: TensorId) -> Result<GradientMap<S>> {
        self.check_id(root)?;
        let root_t = self.tensor(root);
        if !root_t.is_scalar() {
            return Err(CiaError::NotScalar {
                shape: root_t.shape().to_vec(),
            });
        }
        let mut bufs: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        bufs[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let g = match bufs[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut bufs);
            bufs[i] = Some(g);
        }
        let grads = bufs
            .into_iter()
            .enumerate()
            .map(|(i, buf)| {
                buf.map(|b| Tensor {
                    shape: self.nodes[i].tensor.shape().to_vec(),
                    values: b.into_iter().map(S::of_f64).collect(),
                })
            })
            .collect();
        Ok(GradientMap { grads })
    }

    fn propagate(&self, node: usize, g: &[f64], bufs: &mut Vec<Option<Vec<f64>>>) {
        let nodes = &self.nodes;
        let acc = |bufs: &mut Vec<Option<Vec<f64>>>, id: TensorId, f: &mut dyn FnMut(&mut [f64])| {
            let buf = bufs[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].tensor.len()]);
            f(buf);
        };
        match &nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(bufs, *a, &mut |buf| {
                    for (d, &u) in buf.iter_mut().zip(g) {
                        *d += u;
                    }
                });
                acc(bufs, *b, &mut |buf| {
                    for (d, &u) in buf.iter_mut().zip(g) {
                        *d += u;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.tensor(*a).values_f64();
                let bv = self.tensor(*b).values_f64();
                acc(bufs, *a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * bv[i];
                    }
                });
                acc(bufs, *b, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale(a, c) => {
                let c = *c;
                acc(bufs, *a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * c;
                    }
                });
            }
            Op::Matmul(a, b) => {
                let ta = self.tensor(*a);
                let tb = self.tensor(*b);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                let av = ta.values();
                let bv = tb.values();
                acc(bufs, *a, &mut |buf| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0f64;
                            for j in 0..n {
                                s += g[i * n + j] * bv[p * n + j].as_f64();
                            }
                            buf[i * k + p] += s;
                        }
                    }
                });
                acc(bufs, *b, &mut |buf| {
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = 0.0f64;
                            for i in 0..m {
                                s += av[i * k + p].as_f64() * g[i * n + j];
                            }
                            buf[p * n + j] += s;
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let ta = self.tensor(*a);
                let (m, n) = (ta.shape()[0], ta.shape()[1]);
                acc(bufs, *a, &mut |buf| {
                    for i in 0..m {
                        for j in 0..n {
                            buf[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Log(a) => {
                let av = self.tensor(*a).values_f64();
                acc(bufs, *a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] / av[i];
                    }
                });
            }
            Op::Exp(a) => {
                let av = self.tensor(*a).values_f64();
                acc(bufs, *a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * av[i].exp();
                    }
                });
            }
            Op::Tanh(a) => {
                let av = self.tensor(*a).values_f64();
                acc(bufs, *a, &mut |buf| {
                    for i in 0..buf.len() {
                        let t = av[i].tanh();
                        buf[i] += g[i] * (1.0 - t * t);
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let ta = self.tensor(*a);
                let (rows, cols) = match ta.rank() {
                    1 => (1, ta.shape()[0]),
                    _ => (ta.shape()[0], ta.shape()[1]),
                };
                let av = ta.values_f64();
                acc(bufs, *a, &mut |buf| {
                    for r in 0..rows {
                        let p = stable_softmax(&av[r * cols..(r + 1) * cols]);
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = gr.iter().zip(&p).map(|(&u, &pi)| u * pi).sum();
                        for j in 0..cols {
                            buf[r * cols + j] += p[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let u = g[0];
                acc(bufs, *a, &mut |buf| {
                    for d in buf.iter_mut() {
                        *d += u;
                    }
                });
            }
            Op::SliceRows(a, start, _end) => {
                let cols = self.tensor(*a).shape()[1];
                let offset = start * cols;
                acc(bufs, *a, &mut |buf| {
                    for (i, &u) in g.iter().enumerate() {
                        buf[offset + i] += u;
                    }
                });
            }
            Op::Reshape(a) => {
                acc(bufs, *a, &mut |buf| {
                    for (d, &u) in buf.iter_mut().zip(g) {
                        *d += u;
                    }
                });
            }
            Op::Broadcast(a) => {
                let src = self.tensor(*a).shape().to_vec();
                let dst = nodes[node].tensor.shape().to_vec();
                acc(bufs, *a, &mut |buf| {
                    for (flat, &u) in g.iter().enumerate() {
                        buf[broadcast_source_index(flat, &dst, &src)] += u;
                    }
                });
            }
            Op::GatherFlat(a, indices) => {
                acc(bufs, *a, &mut |buf| {
                    for (j, &src) in indices.iter().enumerate() {
                        buf[src] += g[j];
                    }
                });
            }
            Op::CrossEntropy(a, target) => {
                let logits = self.tensor(*a).values_f64();
                let p = stable_softmax(&logits);
                let t = *target;
                let u = g[0];
                acc(bufs, *a, &mut |buf| {
                    for j in 0..buf.len() {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        buf[j] += u * (p[j] - onehot);
                    }
                });
            }
            Op::CeMeanRows {
                logits,
                row_start,
                targets,
            } => {
                let ta = self.tensor(*logits);
                let v = ta.shape()[1];
                let av = ta.values_f64();
                let k = targets.len() as f64;
                let u = g[0];
                acc(bufs, *logits, &mut |buf| {
                    for (i, &t) in targets.iter().enumerate() {
                        let r = row_start + i;
                        let p = stable_softmax(&av[r * v..(r + 1) * v]);
                        for j in 0..v {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            buf[r * v + j] += u * (p[j] - onehot) / k;
                        }
                    }
                });
            }
        }
    }
}

/// Map a flat index in the broadcast output back to the flat source index.
fn broadcast_source_index(flat: usize, dst: &[usize], src: &[usize]) -> usize {
    let mut rem = flat;
    let mut src_idx = 0usize;
    let mut src_stride = 1usize;
    // Build source strides once per call; shapes here are tiny (rank ≤ 2-3).
    let mut strides = vec![0usize; src.len()];
    for d in (0..src.len()).rev() {
        strides[d] = src_stride;
        src_stride *= src[d];
    }
    for d in (0..dst.len()).rev() {
        let coord = rem % dst[d];
        rem /= dst[d];
        let s_coord = if src[d] == 1 { 0 } else { coord };
        src_idx += s_coord * strides[d];
    }
    src_idx
}
